#include "lrt/dataset.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>

#include "lrt/rng.hpp"

namespace lrt {

namespace {

// Last eighth of the samples becomes the validation split.
Dataset split(DenseMatrix x, std::vector<count> y, count channels, count height,
              count width, count num_classes) {
    const count n = x.rows();
    const count n_val = n / 8;
    const count n_train = n - n_val;
    const count d = x.cols();
    Dataset ds;
    ds.channels = channels;
    ds.height = height;
    ds.width = width;
    ds.num_classes = num_classes;
    ds.train_x = DenseMatrix(n_train, d);
    ds.val_x = DenseMatrix(n_val, d);
    std::copy_n(x.data(), n_train * d, ds.train_x.data());
    std::copy_n(x.data() + n_train * d, n_val * d, ds.val_x.data());
    ds.train_y.assign(y.begin(), y.begin() + n_train);
    ds.val_y.assign(y.begin() + n_train, y.end());
    return ds;
}

std::uint32_t read_u32_be(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError("truncated IDX header: " + what);
    }
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
           (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

} // namespace

Dataset make_synthetic_rank2(std::uint64_t seed, count samples) {
    constexpr count kDims = 64;
    constexpr count kClasses = 10;
    constexpr count kRank = 2;
    Rng rng(seed);
    DenseMatrix a(kClasses, kRank);
    for (double& v : a.storage()) v = rng.normal();
    DenseMatrix b(kRank, kDims);
    for (double& v : b.storage()) v = rng.normal();

    DenseMatrix x(samples, kDims);
    std::vector<count> y(samples);
    std::vector<double> h(kRank), logits(kClasses);
    for (count i = 0; i < samples; ++i) {
        double* row = x.data() + i * kDims;
        for (count j = 0; j < kDims; ++j) row[j] = rng.normal();
        for (count r = 0; r < kRank; ++r) {
            double s = 0.0;
            for (count j = 0; j < kDims; ++j) s += b(r, j) * row[j];
            h[r] = s;
        }
        count best = 0;
        for (count c = 0; c < kClasses; ++c) {
            double s = 0.0;
            for (count r = 0; r < kRank; ++r) s += a(c, r) * h[r];
            logits[c] = s;
            if (logits[c] > logits[best]) best = c;
        }
        y[i] = best;
    }
    return split(std::move(x), std::move(y), kDims, 1, 1, kClasses);
}

Dataset make_two_gaussians(std::uint64_t seed, count samples) {
    constexpr count kDims = 16;
    Rng rng(seed);
    DenseMatrix x(samples, kDims);
    std::vector<count> y(samples);
    for (count i = 0; i < samples; ++i) {
        const count label = i % 2;
        const double mean = label == 0 ? -0.5 : 0.5;
        double* row = x.data() + i * kDims;
        for (count j = 0; j < kDims; ++j) row[j] = mean + rng.normal();
        y[i] = label;
    }
    return split(std::move(x), std::move(y), kDims, 1, 1, 2);
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw IoError("cannot open " + images_path);
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw IoError("cannot open " + labels_path);

    if (read_u32_be(img, images_path) != 0x00000803u) {
        throw FormatError(images_path + ": bad IDX image magic");
    }
    const count n = read_u32_be(img, images_path);
    const count rows = read_u32_be(img, images_path);
    const count cols = read_u32_be(img, images_path);

    if (read_u32_be(lab, labels_path) != 0x00000801u) {
        throw FormatError(labels_path + ": bad IDX label magic");
    }
    const count n_labels = read_u32_be(lab, labels_path);
    if (n != n_labels) {
        throw FormatError("IDX image count " + std::to_string(n) +
                          " != label count " + std::to_string(n_labels));
    }

    DenseMatrix x(n, rows * cols);
    std::vector<unsigned char> buf(rows * cols);
    for (count i = 0; i < n; ++i) {
        if (!img.read(reinterpret_cast<char*>(buf.data()), buf.size())) {
            throw FormatError(images_path + ": truncated image payload");
        }
        double* row = x.data() + i * rows * cols;
        for (count j = 0; j < buf.size(); ++j) {
            row[j] = static_cast<double>(buf[j]) / 255.0;
        }
    }
    std::vector<count> y(n);
    count num_classes = 2;
    for (count i = 0; i < n; ++i) {
        unsigned char l;
        if (!lab.read(reinterpret_cast<char*>(&l), 1)) {
            throw FormatError(labels_path + ": truncated label payload");
        }
        y[i] = l;
        num_classes = std::max(num_classes, static_cast<count>(l) + 1);
    }
    return split(std::move(x), std::move(y), 1, rows, cols, num_classes);
}

Dataset load_dataset(const std::string& name_or_path) {
    auto parse_seed = [](const std::string& s, std::uint64_t fallback) {
        const auto pos = s.find(':');
        return pos == std::string::npos ? fallback
                                        : std::stoull(s.substr(pos + 1));
    };
    if (name_or_path.rfind("synthetic-rank2", 0) == 0) {
        return make_synthetic_rank2(parse_seed(name_or_path, 7));
    }
    if (name_or_path.rfind("two-gaussians", 0) == 0) {
        return make_two_gaussians(parse_seed(name_or_path, 7));
    }
    const auto comma = name_or_path.find(',');
    if (comma == std::string::npos) {
        throw InvalidInput("dataset must be a builtin name or an "
                           "<images>,<labels> IDX pair: " + name_or_path);
    }
    return load_idx(name_or_path.substr(0, comma), name_or_path.substr(comma + 1));
}

} // namespace lrt
