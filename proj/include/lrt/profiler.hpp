#ifndef LRT_PROFILER_HPP
#define LRT_PROFILER_HPP

#include <memory>
#include <string>
#include <vector>

#include "lrt/model.hpp"
#include "lrt/rng.hpp"

namespace lrt {

/// Shape of the work one layer stack performs per iteration.
struct WorkloadShape {
    count batch = 1;
    count in_channels = 1;  // m
    count out_channels = 1; // n
    count kernel = 1;       // k
    count height = 1;       // H
    count width = 1;        // W
};

/// FLOPs-to-bytes ratio of a convolution workload:
///   B m n k^2 H W / (m n k^2 + B m H W),
/// proportionality constant fixed at 1. Early layers (large HW, small mn)
/// approach n k^2; late layers approach B H W.
double arithmetic_intensity(const WorkloadShape& w);

/// Contiguous run of same-shape factorizable layers, profiled as a unit.
/// l_beg/l_end are 1-based weight-layer indices, inclusive.
struct LayerStack {
    std::string id;
    count l_beg = 0;
    count l_end = 0;
    WorkloadShape workload;
};

/// Work actually executed by one profiled training iteration, broken down
/// per layer; synthetic clocks advance from this instead of wall time.
struct IterationCost {
    std::vector<LayerCost> layers;
};

/// Injectable time source. Real benchmarking uses WallClock; tests inject
/// a DeviceModelClock so timing is hermetic and exactly reproducible.
class Clock {
  public:
    virtual ~Clock() = default;
    virtual double now_ms() = 0;
    virtual void charge(const IterationCost&) {}
    /// Synthetic clocks derive time purely from charge(); the benchmark
    /// loop skips the numeric execution for them and replays the cost
    /// model, which keeps large-shape profiles cheap and deterministic.
    virtual bool synthetic() const { return false; }
};

class WallClock final : public Clock {
  public:
    double now_ms() override;
};

/// Deterministic roofline-style cost model: each layer contributes
/// max(macs / throughput, elements / bandwidth) milliseconds. An infinite
/// bandwidth makes the clock purely FLOP-proportional.
class DeviceModelClock final : public Clock {
  public:
    DeviceModelClock(double macs_per_ms, double elements_per_ms)
        : macs_per_ms_(macs_per_ms), elements_per_ms_(elements_per_ms) {}

    static DeviceModelClock flops_proportional(double macs_per_ms = 1e7);
    static DeviceModelClock roofline(double macs_per_ms = 1e7,
                                     double elements_per_ms = 5e4);

    double now_ms() override { return time_ms_; }
    void charge(const IterationCost& c) override;
    bool synthetic() const override { return true; }

  private:
    double macs_per_ms_;
    double elements_per_ms_;
    double time_ms_ = 0.0;
};

struct ProfilerConfig {
    count tau = 11;        // iterations per variant, first one discarded
    double rho_bar = 0.25; // profiling rank ratio
    double upsilon = 1.5;  // required speedup for a stack to stay factorized
};

struct StackTiming {
    std::string id;
    count l_beg = 0, l_end = 0;
    double avg_full_ms = 0.0;
    double avg_low_ms = 0.0;
    double speedup = 0.0;
};

struct ProfileResult {
    std::vector<StackTiming> stacks;
    count k_hat = 1;
    double upsilon = 1.5;
    double rho_bar = 0.25;
    count tau = 11;
};

/// Default stack partition: one stack per contiguous run of identically
/// shaped candidate layers (indices 2..L-1; the first and last weight
/// layers are never factorized).
std::vector<LayerStack> stacks_from_model(const HybridModel& model, count batch);

/// Times tau forward+backward iterations of the stack's layers, full-rank
/// versus factorized at rho_bar; the first iteration of each variant is
/// discarded and the remaining ones averaged. Not reentrant under the wall
/// clock: timing integrity needs exclusive execution, so profiling must
/// not run concurrently with training.
std::pair<double, double> benchmark_stack(const HybridModel& model,
                                          const LayerStack& stack,
                                          const ProfilerConfig& config,
                                          Clock& clock, Rng& rng);

/// Walks the stacks front to back: every leading stack failing the
/// full > upsilon * low test stays full-rank and pushes K up to its l_end;
/// the first passing stack stops the exclusion.
ProfileResult select_k(const HybridModel& model,
                       const std::vector<LayerStack>& stacks,
                       const ProfilerConfig& config, Clock& clock, Rng& rng);

} // namespace lrt

#endif
