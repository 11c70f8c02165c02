#include "lrt/snapshot.hpp"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>

#include "lrt/svd.hpp"

namespace lrt {

namespace {

constexpr char kMagic[8] = {'C', 'F', 'S', 'N', 'A', 'P', '0', '1'};

void put_bytes(std::string& out, const void* p, std::size_t n) {
    out.append(static_cast<const char*>(p), n);
}

void put_u16(std::string& out, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v),
                                static_cast<unsigned char>(v >> 8)};
    put_bytes(out, b, 2);
}

void put_u32(std::string& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(out, b, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    put_bytes(out, b, 8);
}

void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

class Reader {
  public:
    Reader(std::string bytes, std::string path)
        : bytes_(std::move(bytes)), path_(std::move(path)) {}

    void take(void* dst, std::size_t n, const std::string& what) {
        if (pos_ + n > bytes_.size()) {
            throw FormatError(path_ + ": truncated while reading " + what);
        }
        std::memcpy(dst, bytes_.data() + pos_, n);
        pos_ += n;
    }

    std::uint16_t u16(const std::string& what) {
        unsigned char b[2];
        take(b, 2, what);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }
    std::uint32_t u32(const std::string& what) {
        unsigned char b[4];
        take(b, 4, what);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    std::uint64_t u64(const std::string& what) {
        unsigned char b[8];
        take(b, 8, what);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
        return v;
    }
    double f64(const std::string& what) {
        const std::uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    bool exhausted() const { return pos_ == bytes_.size(); }

  private:
    std::string bytes_;
    std::string path_;
    std::size_t pos_ = 0;
};

} // namespace

count TensorRecord::elem_count() const {
    count n = 1;
    for (auto d : dims) n *= d;
    return dims.empty() ? 0 : n;
}

void write_snapshot(const std::string& path, count epoch,
                    const std::vector<TensorRecord>& tensors) {
    std::string out;
    put_bytes(out, kMagic, 8);
    put_u64(out, epoch);
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& t : tensors) {
        if (t.name.size() > 0xFFFF) {
            throw InvalidInput("record name too long: " + t.name);
        }
        if (t.data.size() != t.elem_count()) {
            throw InvalidInput("record " + t.name + ": payload length " +
                               std::to_string(t.data.size()) + " != dims product");
        }
        put_u16(out, static_cast<std::uint16_t>(t.name.size()));
        put_bytes(out, t.name.data(), t.name.size());
        const std::uint8_t kind = static_cast<std::uint8_t>(t.kind);
        put_bytes(out, &kind, 1);
        const std::uint8_t ndims = static_cast<std::uint8_t>(t.dims.size());
        put_bytes(out, &ndims, 1);
        for (auto d : t.dims) put_u32(out, d);
        for (double v : t.data) put_f64(out, v);
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed: " + path);
}

std::pair<count, std::vector<TensorRecord>> read_snapshot(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::string bytes((std::istreambuf_iterator<char>(f)),
                      std::istreambuf_iterator<char>());
    Reader r(std::move(bytes), path);

    char magic[8];
    r.take(magic, 8, "magic");
    if (std::memcmp(magic, kMagic, 8) != 0) {
        throw FormatError(path + ": bad magic");
    }
    const count epoch = r.u64("epoch");
    const std::uint32_t n_records = r.u32("record count");
    std::vector<TensorRecord> records;
    records.reserve(n_records);
    for (std::uint32_t i = 0; i < n_records; ++i) {
        TensorRecord t;
        const std::uint16_t name_len = r.u16("record name length");
        t.name.resize(name_len);
        r.take(t.name.data(), name_len, "record name");
        std::uint8_t kind;
        r.take(&kind, 1, "record " + t.name);
        if (kind > 1) throw FormatError(path + ": record " + t.name + ": bad kind");
        t.kind = static_cast<TensorRecord::Kind>(kind);
        std::uint8_t ndims;
        r.take(&ndims, 1, "record " + t.name);
        t.dims.resize(ndims);
        for (auto& d : t.dims) d = r.u32("record " + t.name + " dims");
        t.data.resize(t.elem_count());
        for (auto& v : t.data) v = r.f64("record " + t.name + " payload");
        for (const auto& prev : records) {
            if (prev.name == t.name) {
                throw FormatError(path + ": duplicate record name " + t.name);
            }
        }
        records.push_back(std::move(t));
    }
    if (!r.exhausted()) throw FormatError(path + ": trailing bytes");
    return {epoch, std::move(records)};
}

std::vector<TensorRecord> model_to_records(const HybridModel& model) {
    std::vector<TensorRecord> records;
    for (const auto& l : model.layers) {
        auto dense_record = [](const std::string& name, const DenseMatrix& m) {
            TensorRecord t;
            t.name = name;
            t.kind = TensorRecord::Kind::dense;
            t.dims = {static_cast<std::uint32_t>(m.rows()),
                      static_cast<std::uint32_t>(m.cols())};
            t.data = m.storage();
            return t;
        };
        if (!l.factorized) {
            if (l.kind == LayerKind::dense) {
                records.push_back(dense_record(l.name, l.w));
            } else {
                TensorRecord t;
                t.name = l.name;
                t.kind = TensorRecord::Kind::conv;
                t.dims = {static_cast<std::uint32_t>(l.out_channels),
                          static_cast<std::uint32_t>(l.in_channels),
                          static_cast<std::uint32_t>(l.kernel),
                          static_cast<std::uint32_t>(l.kernel)};
                t.data = roll_conv(l.w, l.in_channels, l.out_channels, l.kernel).data;
                records.push_back(std::move(t));
            }
        } else if (l.kind == LayerKind::dense) {
            records.push_back(dense_record(l.name + ".u", l.u));
            records.push_back(dense_record(l.name + ".vt", l.v_t));
        } else {
            FactorizedPair pair;
            pair.u = l.u;
            pair.v_t = l.v_t;
            pair.rank = l.u.cols();
            pair.origin = FactorizedPair::Origin::conv;
            pair.conv_in = l.in_channels;
            pair.conv_out = l.out_channels;
            pair.conv_kernel = l.kernel;
            auto [u_kernel, v_kernel] = reshape_to_conv(pair);
            TensorRecord tu;
            tu.name = l.name + ".u";
            tu.kind = TensorRecord::Kind::conv;
            tu.dims = {static_cast<std::uint32_t>(u_kernel.out_channels),
                       static_cast<std::uint32_t>(u_kernel.in_channels),
                       static_cast<std::uint32_t>(u_kernel.kernel),
                       static_cast<std::uint32_t>(u_kernel.kernel)};
            tu.data = u_kernel.data;
            records.push_back(std::move(tu));
            TensorRecord tv;
            tv.name = l.name + ".vt";
            tv.kind = TensorRecord::Kind::conv;
            tv.dims = {static_cast<std::uint32_t>(v_kernel.out_channels),
                       static_cast<std::uint32_t>(v_kernel.in_channels), 1, 1};
            tv.data = v_kernel.data;
            records.push_back(std::move(tv));
        }
        if (!l.bias.empty()) {
            TensorRecord t;
            t.name = l.name + ".bias";
            t.kind = TensorRecord::Kind::dense;
            t.dims = {static_cast<std::uint32_t>(l.bias.size())};
            t.data = l.bias;
            records.push_back(std::move(t));
        }
    }
    return records;
}

namespace {

struct LayerView {
    std::string name;
    count rows = 0, cols = 0; // effective matrix shape (conv unrolled)
    DenseMatrix matrix(const TensorRecord& t) const {
        if (t.dims.size() == 2) {
            return DenseMatrix(t.dims[0], t.dims[1], t.data);
        }
        ConvKernel k(t.dims[0], t.dims[1], t.dims[2]);
        k.data = t.data;
        return unroll_conv(k);
    }
};

bool is_weight_record(const TensorRecord& t) {
    return (t.dims.size() == 2 && t.dims[0] > 0 && t.dims[1] > 0) ||
           (t.dims.size() == 4 && t.dims[2] == t.dims[3]);
}

} // namespace

AnalysisResult analyze_snapshots(const std::string& directory,
                                 const AnalysisOptions& options) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(directory)) {
        throw IoError("not a directory: " + directory);
    }
    std::map<count, std::vector<TensorRecord>> by_epoch;
    for (const auto& entry : fs::directory_iterator(directory)) {
        if (!entry.is_regular_file()) continue;
        if (entry.path().extension() != ".cfsnap") continue;
        auto [epoch, records] = read_snapshot(entry.path().string());
        if (by_epoch.count(epoch)) {
            throw SequenceError("duplicate snapshot for epoch " +
                                std::to_string(epoch));
        }
        by_epoch.emplace(epoch, std::move(records));
    }
    if (by_epoch.empty()) throw IoError("no .cfsnap files in " + directory);
    count expected = 0;
    for (const auto& [epoch, _] : by_epoch) {
        if (epoch != expected) {
            throw SequenceError("snapshot epochs must be consecutive from 0; "
                                "missing epoch " + std::to_string(expected));
        }
        ++expected;
    }
    const count last_epoch = expected - 1;

    // Layer list and order come from the epoch-0 weight records.
    std::vector<LayerView> layers;
    for (const auto& t : by_epoch.at(0)) {
        if (!is_weight_record(t)) continue;
        LayerView v;
        v.name = t.name;
        if (t.dims.size() == 2) {
            v.rows = t.dims[0];
            v.cols = t.dims[1];
        } else {
            v.rows = static_cast<count>(t.dims[1]) * t.dims[2] * t.dims[3];
            v.cols = t.dims[0];
        }
        layers.push_back(std::move(v));
    }
    if (layers.empty()) throw FormatError("epoch-0 snapshot has no weight records");

    AnalysisResult result;
    SwitchDetector detector(options.stabilization);
    std::optional<count> detected;
    std::vector<count> candidate_idx; // positions into `layers`
    for (count i = 0; i < layers.size(); ++i) {
        const count index1 = i + 1;
        if (index1 > options.prefix_k && index1 < layers.size()) {
            candidate_idx.push_back(i);
        }
    }

    for (count epoch = 0; epoch <= last_epoch; ++epoch) {
        const auto& records = by_epoch.at(epoch);
        for (count i = 0; i < layers.size(); ++i) {
            const TensorRecord* rec = nullptr;
            for (const auto& t : records) {
                if (t.name == layers[i].name) {
                    rec = &t;
                    break;
                }
            }
            if (!rec) {
                throw FormatError("epoch " + std::to_string(epoch) +
                                  " snapshot is missing record " + layers[i].name);
            }
            const DenseMatrix w = layers[i].matrix(*rec);
            const std::vector<double> sigma = singular_values(w);
            const double sr = stable_rank(sigma);
            if (epoch == 0) {
                const count full = std::min(layers[i].rows, layers[i].cols);
                const double xi = static_cast<double>(full) / sr;
                result.trajectories.emplace_back(layers[i].name, xi, full);
            }
            result.trajectories[i].append(epoch, sr);
        }
        if (!detected && !candidate_idx.empty()) {
            std::vector<RankTrajectory> candidates;
            for (count i : candidate_idx) candidates.push_back(result.trajectories[i]);
            detected = detector.observe(candidates);
        }
    }

    const count need = std::max<count>(options.stabilization.min_epochs,
                                       options.stabilization.window + 1);
    result.enough_data = last_epoch + 1 >= need;
    if (!result.enough_data) return result;

    count plan_epoch;
    if (detected && *detected <= last_epoch) {
        result.stabilized = true;
        result.switch_epoch = *detected;
        plan_epoch = *detected;
    } else {
        result.stabilized = detected.has_value();
        result.fallback = true;
        result.switch_epoch = detected ? *detected : last_epoch;
        plan_epoch = last_epoch;
    }

    // Ranks from the plan epoch's spectra plus the epoch-0 scale factors.
    FactorizationPlan plan;
    plan.switch_epoch = *result.switch_epoch;
    plan.prefix_k = options.prefix_k;
    plan.estimator = options.estimator;
    const auto& plan_records = by_epoch.at(plan_epoch);
    for (count i : candidate_idx) {
        const TensorRecord* rec = nullptr;
        for (const auto& t : plan_records) {
            if (t.name == layers[i].name) {
                rec = &t;
                break;
            }
        }
        const DenseMatrix w = layers[i].matrix(*rec);
        const std::vector<double> sigma = singular_values(w);
        PlanEntry entry;
        entry.layer = layers[i].name;
        entry.rank = estimate_rank(sigma, result.trajectories[i].xi(),
                                   options.estimator);
        entry.skip = !break_even(layers[i].rows, layers[i].cols, entry.rank);
        plan.ranks.push_back(std::move(entry));
    }
    result.plan = std::move(plan);
    return result;
}

} // namespace lrt
