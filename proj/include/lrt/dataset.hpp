#ifndef LRT_DATASET_HPP
#define LRT_DATASET_HPP

#include <string>
#include <vector>

#include "lrt/tensor.hpp"

namespace lrt {

/// Feature matrices (row = sample, layout (c, h, w) fastest-last) with
/// integer labels, split into train and validation parts.
struct Dataset {
    DenseMatrix train_x;
    std::vector<count> train_y;
    DenseMatrix val_x;
    std::vector<count> val_y;
    count channels = 1, height = 1, width = 1;
    count num_classes = 2;

    count feature_dim() const { return channels * height * width; }
};

/// Planted low-rank teacher: x ~ N(0, I) in 64 dims, labels from
/// argmax softmax(A B x) with A (10 x 2) and B (2 x 64) drawn from the
/// seed. The teacher logits have rank 2, so a trained student's wide
/// layers have a known intrinsic rank to find.
Dataset make_synthetic_rank2(std::uint64_t seed = 7, count samples = 4096);

/// Two well-separated Gaussian blobs in 16 dims; a small smoke-test task.
Dataset make_two_gaussians(std::uint64_t seed = 7, count samples = 2048);

/// IDX image/label file pair (magic 0x00000803 / 0x00000801, big-endian
/// dims); pixels normalized to [0, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// `synthetic-rank2[:seed]`, `two-gaussians[:seed]`, or
/// `<images>,<labels>` naming an IDX pair.
Dataset load_dataset(const std::string& name_or_path);

} // namespace lrt

#endif
