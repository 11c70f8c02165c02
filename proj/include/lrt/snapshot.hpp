#ifndef LRT_SNAPSHOT_HPP
#define LRT_SNAPSHOT_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lrt/factorizer.hpp"
#include "lrt/model.hpp"
#include "lrt/rank_trajectory.hpp"

namespace lrt {

/// One named tensor in a CFSNAP01 file.
///
/// Byte layout of a file: magic "CFSNAP01" (8 bytes), epoch (u64 LE),
/// record count (u32 LE), then per record: name length (u16 LE), name
/// bytes, kind (u8: 0 dense, 1 conv), dim count (u8), dims (u32 LE each),
/// payload (f64 LE, product-of-dims values).
struct TensorRecord {
    enum class Kind : std::uint8_t { dense = 0, conv = 1 };

    std::string name;
    Kind kind = Kind::dense;
    std::vector<std::uint32_t> dims;
    std::vector<double> data;

    count elem_count() const;
};

void write_snapshot(const std::string& path, count epoch,
                    const std::vector<TensorRecord>& tensors);

/// Exact inverse of write_snapshot. Bad magic or a truncated payload
/// raises FormatError (naming the offending record where one is known).
std::pair<count, std::vector<TensorRecord>> read_snapshot(const std::string& path);

/// Records for the model's current weights, layer order: the weight tensor
/// under the layer name (factorized layers as <name>.u / <name>.vt), then
/// <name>.bias when present.
std::vector<TensorRecord> model_to_records(const HybridModel& model);

struct AnalysisOptions {
    RankEstimatorConfig estimator;
    StabilizationConfig stabilization;
    count prefix_k = 1;
};

struct AnalysisResult {
    std::vector<RankTrajectory> trajectories;
    bool enough_data = false;
    bool stabilized = false;
    bool fallback = false; // plan taken from the last available epoch
    std::optional<count> switch_epoch;
    std::optional<FactorizationPlan> plan;
};

/// Offline reconstruction of the rank trajectories and, once stabilized,
/// the factorization plan from a directory of consecutive per-epoch
/// snapshots (the trainer's dumps, or any producer of this format).
/// Matches the trainer's own results on the same weights.
AnalysisResult analyze_snapshots(const std::string& directory,
                                 const AnalysisOptions& options);

} // namespace lrt

#endif
