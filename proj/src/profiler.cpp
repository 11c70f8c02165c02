#include "lrt/profiler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "lrt/factorizer.hpp"

namespace lrt {

double arithmetic_intensity(const WorkloadShape& w) {
    if (w.batch < 1 || w.in_channels < 1 || w.out_channels < 1 || w.kernel < 1 ||
        w.height < 1 || w.width < 1) {
        throw InvalidInput("workload dimensions must all be >= 1");
    }
    const double b = static_cast<double>(w.batch);
    const double m = static_cast<double>(w.in_channels);
    const double n = static_cast<double>(w.out_channels);
    const double k2 = static_cast<double>(w.kernel * w.kernel);
    const double hw = static_cast<double>(w.height * w.width);
    return b * m * n * k2 * hw / (m * n * k2 + b * m * hw);
}

double WallClock::now_ms() {
    const auto t = std::chrono::steady_clock::now().time_since_epoch();
    return std::chrono::duration<double, std::milli>(t).count();
}

DeviceModelClock DeviceModelClock::flops_proportional(double macs_per_ms) {
    return DeviceModelClock(macs_per_ms, std::numeric_limits<double>::infinity());
}

DeviceModelClock DeviceModelClock::roofline(double macs_per_ms,
                                            double elements_per_ms) {
    return DeviceModelClock(macs_per_ms, elements_per_ms);
}

void DeviceModelClock::charge(const IterationCost& c) {
    for (const auto& layer : c.layers) {
        time_ms_ +=
            std::max(layer.macs / macs_per_ms_, layer.elements / elements_per_ms_);
    }
}

namespace {

bool same_shape(const Layer& a, const Layer& b) {
    if (a.kind != b.kind) return false;
    if (a.kind == LayerKind::dense) {
        return a.in_features == b.in_features && a.out_features == b.out_features;
    }
    return a.in_channels == b.in_channels && a.out_channels == b.out_channels &&
           a.kernel == b.kernel && a.in_shape == b.in_shape;
}

WorkloadShape workload_of(const Layer& l, count batch) {
    WorkloadShape w;
    w.batch = batch;
    if (l.kind == LayerKind::dense) {
        w.in_channels = l.in_features;
        w.out_channels = l.out_features;
        w.kernel = 1;
        w.height = w.width = 1;
    } else {
        w.in_channels = l.in_channels;
        w.out_channels = l.out_channels;
        w.kernel = l.kernel;
        w.height = l.in_shape.height;
        w.width = l.in_shape.width;
    }
    return w;
}

// Standalone copy of the stack's layers, optionally factorized at rho_bar.
// Dry-run benchmarks (synthetic clock) never execute the factors, so they
// get zero-valued placeholders of the right shape instead of a real SVD.
HybridModel stack_submodel(const HybridModel& model, const LayerStack& stack,
                           double rho_bar, bool factorize, bool materialize) {
    HybridModel sub;
    sub.input = model.layer_at(stack.l_beg).in_shape;
    sub.num_classes = 2; // unused; forward/backward only
    for (count idx = stack.l_beg; idx <= stack.l_end; ++idx) {
        Layer l = model.layer_at(idx);
        l.index = sub.layers.size() + 1;
        sub.layers.push_back(std::move(l));
    }
    if (factorize) {
        for (auto& l : sub.layers) {
            const count full = l.full_rank();
            count r = static_cast<count>(
                std::max(1.0, std::floor(rho_bar * static_cast<double>(full) + 0.5)));
            r = std::min(r, full);
            if (materialize) {
                FactorizedPair pair =
                    l.kind == LayerKind::conv
                        ? spectral_factorize_conv(l.w, r, l.in_channels,
                                                  l.out_channels, l.kernel)
                        : spectral_factorize(l.w, r);
                l.u = std::move(pair.u);
                l.v_t = std::move(pair.v_t);
            } else {
                l.u = DenseMatrix(l.rows(), r);
                l.v_t = DenseMatrix(r, l.cols());
            }
            l.factorized = true;
            l.w = DenseMatrix();
            l.gw = DenseMatrix();
            l.vw = DenseMatrix();
            l.gu = DenseMatrix(l.u.rows(), l.u.cols());
            l.gv_t = DenseMatrix(l.v_t.rows(), l.v_t.cols());
        }
    }
    return sub;
}

IterationCost iteration_cost(const HybridModel& sub, count batch) {
    IterationCost cost;
    for (const auto& l : sub.layers) {
        LayerCost lc = layer_cost(l, batch);
        // one forward plus roughly two forward-equivalents of backward
        lc.macs *= 3.0;
        lc.elements *= 3.0;
        cost.layers.push_back(lc);
    }
    return cost;
}

double timed_average(HybridModel& sub, count batch, count tau, Clock& clock,
                     Rng& rng) {
    std::vector<double> durations;
    durations.reserve(tau);
    if (clock.synthetic()) {
        const IterationCost cost = iteration_cost(sub, batch);
        for (count it = 0; it < tau; ++it) {
            const double t0 = clock.now_ms();
            clock.charge(cost);
            durations.push_back(clock.now_ms() - t0);
        }
    } else {
        DenseMatrix x(batch, sub.input.elems());
        for (double& v : x.storage()) v = rng.normal();
        const count out_elems = sub.layers.back().out_shape.elems();
        DenseMatrix dout(batch, out_elems);
        std::fill(dout.storage().begin(), dout.storage().end(),
                  1.0 / static_cast<double>(batch * out_elems));
        const IterationCost cost = iteration_cost(sub, batch);
        ForwardContext ctx;
        for (count it = 0; it < tau; ++it) {
            const double t0 = clock.now_ms();
            forward(sub, x, &ctx);
            zero_gradients(sub);
            backward(sub, ctx, dout);
            clock.charge(cost);
            durations.push_back(clock.now_ms() - t0);
        }
    }
    double sum = 0.0;
    for (count i = 1; i < durations.size(); ++i) sum += durations[i];
    return sum / static_cast<double>(durations.size() - 1);
}

} // namespace

std::vector<LayerStack> stacks_from_model(const HybridModel& model, count batch) {
    std::vector<LayerStack> stacks;
    const count L = model.weight_layer_count();
    if (L < 3) return stacks; // nothing factorizable between first and last
    count run_start = 2;
    for (count idx = 3; idx <= L; ++idx) {
        const bool boundary =
            idx == L || !same_shape(model.layer_at(idx), model.layer_at(run_start));
        if (!boundary) continue;
        LayerStack s;
        s.l_beg = run_start;
        s.l_end = idx - 1;
        s.id = "stack" + std::to_string(stacks.size() + 1);
        s.workload = workload_of(model.layer_at(run_start), batch);
        stacks.push_back(std::move(s));
        run_start = idx;
    }
    return stacks;
}

std::pair<double, double> benchmark_stack(const HybridModel& model,
                                          const LayerStack& stack,
                                          const ProfilerConfig& config,
                                          Clock& clock, Rng& rng) {
    if (config.tau < 2) throw ProfileError("tau must be >= 2");
    if (config.rho_bar <= 0.0 || config.rho_bar > 1.0) {
        throw ProfileError("rho_bar must be in (0, 1]");
    }
    if (stack.l_beg < 1 || stack.l_end > model.weight_layer_count() ||
        stack.l_beg > stack.l_end) {
        throw ProfileError("stack range invalid: " + stack.id);
    }
    const count batch = stack.workload.batch;
    const bool materialize = !clock.synthetic();
    HybridModel full = stack_submodel(model, stack, config.rho_bar, false, true);
    HybridModel low =
        stack_submodel(model, stack, config.rho_bar, true, materialize);
    const double avg_low = timed_average(low, batch, config.tau, clock, rng);
    const double avg_full = timed_average(full, batch, config.tau, clock, rng);
    return {avg_full, avg_low};
}

ProfileResult select_k(const HybridModel& model,
                       const std::vector<LayerStack>& stacks,
                       const ProfilerConfig& config, Clock& clock, Rng& rng) {
    if (stacks.empty()) throw ProfileError("no layer stacks to profile");
    for (count i = 0; i + 1 < stacks.size(); ++i) {
        if (stacks[i].l_end >= stacks[i + 1].l_beg) {
            throw ProfileError("stacks overlap or are unordered");
        }
    }
    if (config.upsilon <= 1.0) throw ProfileError("upsilon must be > 1");

    ProfileResult result;
    result.upsilon = config.upsilon;
    result.rho_bar = config.rho_bar;
    result.tau = config.tau;
    result.k_hat = stacks.front().l_beg - 1;

    bool leading = true;
    for (const auto& stack : stacks) {
        const auto [avg_full, avg_low] =
            benchmark_stack(model, stack, config, clock, rng);
        StackTiming t;
        t.id = stack.id;
        t.l_beg = stack.l_beg;
        t.l_end = stack.l_end;
        t.avg_full_ms = avg_full;
        t.avg_low_ms = avg_low;
        t.speedup = avg_low > 0.0 ? avg_full / avg_low : 1.0;
        result.stacks.push_back(t);
        const bool pass = avg_full > config.upsilon * avg_low;
        if (leading && !pass) {
            result.k_hat = stack.l_end;
        } else if (pass) {
            leading = false;
        }
    }
    return result;
}

} // namespace lrt
