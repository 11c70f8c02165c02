#ifndef LRT_RANK_TRAJECTORY_HPP
#define LRT_RANK_TRAJECTORY_HPP

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lrt/rank_metrics.hpp"

namespace lrt {

/// Stable ranks of one layer recorded per epoch, together with the layer's
/// fixed epoch-0 scale factor. Epoch 0 is the initialization snapshot;
/// epoch t >= 1 is the state after the t-th full-rank training epoch.
class RankTrajectory {
  public:
    RankTrajectory() = default;
    RankTrajectory(std::string layer_id, double xi, count full_rank)
        : layer_id_(std::move(layer_id)), xi_(xi), full_rank_(full_rank) {}

    const std::string& layer_id() const { return layer_id_; }
    double xi() const { return xi_; }
    count full_rank() const { return full_rank_; }
    const std::vector<std::pair<count, double>>& values() const { return values_; }
    count length() const { return values_.size(); }

    /// Epochs must arrive consecutively starting at 0; anything else is a
    /// SequenceError.
    void append(count epoch, double stable_rank);

  private:
    std::string layer_id_;
    double xi_ = 1.0;
    count full_rank_ = 0;
    std::vector<std::pair<count, double>> values_;
};

struct StabilizationConfig {
    /// Rank units per epoch below which a trajectory counts as flat.
    double epsilon = 0.1;
    /// Number of consecutive one-step differences averaged by the detector;
    /// raw differences on SGD trajectories oscillate, a short mean does not.
    count window = 3;
    /// Observations required before stabilization may be declared (guards
    /// against a flat stretch during LR warm-up).
    count min_epochs = 5;
};

/// Mean of |r^t - r^{t-1}| over the last `window` consecutive epoch pairs.
/// Throws NotEnoughData when fewer than window + 1 entries exist.
double derivative(const RankTrajectory& trajectory, count window);

/// True iff derivative(t, window) <= epsilon for every tracked trajectory.
/// Throws NotEnoughData when any trajectory is shorter than the window or
/// min_epochs requirement; the driver treats that as "not stabilized".
bool all_stabilized(std::span<const RankTrajectory> trajectories,
                    const StabilizationConfig& config);

/// Stateful wrapper around the per-epoch stabilization test: returns the
/// switch epoch t+1 the first time all tracked trajectories pass at epoch t,
/// and keeps returning that value afterwards (idempotent).
class SwitchDetector {
  public:
    explicit SwitchDetector(StabilizationConfig config) : config_(config) {}

    std::optional<count> observe(std::span<const RankTrajectory> trajectories);
    std::optional<count> detected() const { return detected_; }
    const StabilizationConfig& config() const { return config_; }

  private:
    StabilizationConfig config_;
    std::optional<count> detected_;
};

/// CSV rows (epoch, layer, stable_rank, scaled_stable_rank, rank_ratio),
/// ordered by epoch then by trajectory order; fixed header line.
void write_trajectory_csv(std::ostream& out,
                          std::span<const RankTrajectory> trajectories);

} // namespace lrt

#endif
