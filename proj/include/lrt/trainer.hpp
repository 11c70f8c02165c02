#ifndef LRT_TRAINER_HPP
#define LRT_TRAINER_HPP

#include <optional>
#include <string>
#include <vector>

#include "lrt/dataset.hpp"
#include "lrt/factorizer.hpp"
#include "lrt/model.hpp"
#include "lrt/profiler.hpp"
#include "lrt/rank_trajectory.hpp"
#include "lrt/regularization.hpp"

namespace lrt {

struct LrMilestone {
    count epoch = 0;
    double multiplier = 1.0; // applied to the base learning rate from `epoch` on
};

struct TrainConfig {
    count total_epochs = 60;
    count batch_size = 256;
    double learning_rate = 0.1;
    double momentum = 0.9;
    DecayConfig decay{1e-4, DecayScheme::frobenius};
    std::vector<LrMilestone> lr_milestones;
    double switch_lr_multiplier = 1.0;
    std::uint64_t seed = 1;
    StabilizationConfig stabilization;
    RankEstimatorConfig estimator;
    /// Number of full-rank epochs to force (bypasses detection); 0 is the
    /// spectral-initialization special case, total_epochs factorizes after
    /// training ends.
    std::optional<count> forced_e;
};

struct EpochRecord {
    count epoch = 0;
    std::string phase; // "full_rank" | "low_rank"
    double loss = 0.0;
    double accuracy = 0.0;
    double learning_rate = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    count prefix_k = 1;
    /// Weight snapshot version that was factorized (= number of full-rank
    /// training epochs); empty when the model was never factorized.
    std::optional<count> switch_epoch;
    bool switch_forced = false;
    bool fallback_used = false;
    FactorizationPlan plan; // empty ranks when nothing was planned
    count params_full_rank = 0;
    count params_low_rank = 0;
    double final_accuracy = 0.0;
    // Wall-clock seconds per phase; reported on stdout, not serialized
    // (serialized outputs stay byte-reproducible).
    double wall_seconds_full_rank = 0.0;
    double wall_seconds_low_rank = 0.0;
};

struct TrainOutput {
    HybridModel model;
    TrainReport report;
    std::vector<RankTrajectory> trajectories;
};

/// Thrown when the loss goes non-finite or past 1e6; carries the progress
/// made so far.
class TrainingDiverged : public DivergenceError {
  public:
    TrainingDiverged(const std::string& msg, TrainReport partial_report)
        : DivergenceError(msg), partial(std::move(partial_report)) {}
    TrainReport partial;
};

/// Loss and parameter gradients for one batch (gradients land in the
/// model's per-layer buffers, zeroed first).
double forward_backward(HybridModel& model, const DenseMatrix& x,
                        std::span<const count> labels);

/// Adds the decay gradients: Frobenius decay on factorized pairs and plain
/// l2 on full-rank matrices (per the configured scheme); biases exempt.
void add_decay_gradients(HybridModel& model, const DecayConfig& decay);

/// v <- momentum * v + g;  w <- w - lr * v.
void sgd_step(HybridModel& model, double lr, double momentum);

/// Fraction of argmax-correct predictions; ties resolve to the lowest
/// class index. Throws InvalidInput on an empty dataset.
double evaluate(const HybridModel& model, const DenseMatrix& x,
                std::span<const count> labels);

/// The full automated schedule: profile K, train full-rank while tracking
/// per-layer stable ranks, factorize at the detected (or forced) switch
/// epoch with scaled stable ranks, finish training low-rank. Optimizer
/// velocity of replaced layers resets at the switch; the learning rate is
/// multiplied by switch_lr_multiplier from the switch on.
///
/// `profile_clock` overrides the wall clock used for the K decision (tests
/// inject a synthetic clock); `snapshot_dir`, when non-empty, receives one
/// CFSNAP01 file per full-rank weight version.
TrainOutput train_adaptive(const ModelSpec& spec, const Dataset& data,
                           const TrainConfig& config,
                           Clock* profile_clock = nullptr,
                           const std::string& snapshot_dir = "");

} // namespace lrt

#endif
