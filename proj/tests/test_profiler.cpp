#include <doctest.h>

#include <cmath>
#include <deque>

#include "lrt/profiler.hpp"
#include "oracles.hpp"

using namespace lrt;

namespace {

// Clock whose iterations advance by scripted amounts, in charge() order.
class ScriptedClock final : public Clock {
  public:
    explicit ScriptedClock(std::deque<double> steps) : steps_(std::move(steps)) {}
    double now_ms() override { return t_; }
    void charge(const IterationCost&) override {
        REQUIRE_FALSE(steps_.empty());
        t_ += steps_.front();
        steps_.pop_front();
    }
    bool synthetic() const override { return true; }

  private:
    std::deque<double> steps_;
    double t_ = 0.0;
};

HybridModel dense_chain(const std::vector<count>& widths, count input, Rng& rng) {
    ModelSpec spec;
    spec.input = {input, 1, 1};
    for (count w : widths) spec.hidden.push_back({LayerKind::dense, w});
    spec.num_classes = 10;
    return build_model(spec, rng);
}

} // namespace

TEST_CASE("arithmetic intensity closed form") {
    WorkloadShape unit; // all ones
    CHECK(arithmetic_intensity(unit) == doctest::Approx(0.5).epsilon(1e-15));

    WorkloadShape w{128, 32, 48, 3, 14, 14};
    const double b = 128, m = 32, n = 48, k2 = 9, hw = 196;
    const double want = b * m * n * k2 * hw / (m * n * k2 + b * m * hw);
    CHECK(arithmetic_intensity(w) == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("early layers approach n k^2") {
    // Large B H W relative to the weights: limit n k^2 = 64 * 9 = 576.
    WorkloadShape w{1024, 64, 64, 3, 32, 32};
    const double ai = arithmetic_intensity(w);
    CHECK(ai < 576.0);
    CHECK(ai > 576.0 * 0.99);
}

TEST_CASE("late layers approach B H W") {
    // Weights dominate the data movement: limit B H W = 1024 * 8 * 8.
    WorkloadShape w{1024, 512, 1 << 20, 3, 8, 8};
    const double ai = arithmetic_intensity(w);
    CHECK(ai < 65536.0);
    CHECK(ai > 65536.0 * 0.99);
}

TEST_CASE("device model clock charges the roofline maximum per layer") {
    DeviceModelClock clock = DeviceModelClock::roofline(100.0, 10.0);
    clock.charge({{{500.0, 20.0}}}); // compute bound: 5ms > 2ms
    CHECK(clock.now_ms() == doctest::Approx(5.0));
    clock.charge({{{100.0, 80.0}}}); // memory bound: 8ms > 1ms
    CHECK(clock.now_ms() == doctest::Approx(13.0));
    // Two layers in one iteration: the maxima add per layer.
    clock.charge({{{500.0, 20.0}, {100.0, 80.0}}});
    CHECK(clock.now_ms() == doctest::Approx(26.0));

    DeviceModelClock flops = DeviceModelClock::flops_proportional(100.0);
    flops.charge({{{500.0, 1e12}}});
    CHECK(flops.now_ms() == doctest::Approx(5.0));
}

TEST_CASE("benchmark under a FLOP clock matches the closed-form cost model") {
    Rng rng(81);
    ModelSpec spec;
    spec.input = {512, 8, 8};
    LayerDesc conv;
    conv.kind = LayerKind::conv;
    conv.out = 512;
    conv.kernel = 3;
    conv.padding = 1;
    spec.hidden = {conv, conv};
    spec.num_classes = 10;
    HybridModel model = build_model(spec, rng);

    LayerStack stack;
    stack.id = "stack1";
    stack.l_beg = 2;
    stack.l_end = 2;
    stack.workload = WorkloadShape{1024, 512, 512, 3, 8, 8};

    ProfilerConfig cfg;
    cfg.tau = 4;
    DeviceModelClock clock = DeviceModelClock::flops_proportional(1e7);
    const auto [avg_full, avg_low] = benchmark_stack(model, stack, cfg, clock, rng);

    // Full: B*OH*OW*n*(m k^2) MACs forward, x3 for the backward passes.
    const double macs_full = 1024.0 * 64.0 * 512.0 * 4608.0;
    CHECK(avg_full == doctest::Approx(3.0 * macs_full / 1e7).epsilon(1e-12));
    // Low rank at rho_bar = 1/4: r = 128 of full rank 512.
    const double macs_low = 1024.0 * 64.0 * 128.0 * (4608.0 + 512.0);
    CHECK(avg_low == doctest::Approx(3.0 * macs_low / 1e7).epsilon(1e-12));
    CHECK(avg_full / avg_low == doctest::Approx(3.6).epsilon(1e-12));
}

TEST_CASE("skip-worthy tiny layers profile flat") {
    Rng rng(82);
    HybridModel model = dense_chain({2, 2, 2}, 2, rng);
    LayerStack stack;
    stack.id = "tiny";
    stack.l_beg = 2;
    stack.l_end = 3;
    stack.workload.batch = 64;
    stack.workload.in_channels = 2;
    stack.workload.out_channels = 2;

    ProfilerConfig cfg;
    cfg.tau = 3;
    DeviceModelClock clock = DeviceModelClock::flops_proportional(1e6);
    const auto [avg_full, avg_low] = benchmark_stack(model, stack, cfg, clock, rng);
    // 2x2 at r=1: the pair costs exactly as much as the matrix.
    CHECK(avg_full / avg_low == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("select_k excludes leading stacks failing the speedup test") {
    Rng rng(83);
    HybridModel model = dense_chain({64, 64, 64, 64}, 64, rng);
    std::vector<LayerStack> stacks(2);
    stacks[0] = {"stack1", 2, 3, WorkloadShape{32, 64, 64, 1, 1, 1}};
    stacks[1] = {"stack2", 4, 4, WorkloadShape{32, 64, 64, 1, 1, 1}};

    ProfilerConfig cfg;
    cfg.tau = 2;
    // Iteration order is low then full per stack: stack1 90/100, stack2 50/100.
    ScriptedClock clock({90, 90, 100, 100, 50, 50, 100, 100});
    const ProfileResult result = select_k(model, stacks, cfg, clock, rng);
    CHECK(result.stacks[0].speedup == doctest::Approx(100.0 / 90.0));
    CHECK(result.stacks[1].speedup == doctest::Approx(2.0));
    CHECK(result.k_hat == 3); // l_end of the failing leading stack
}

TEST_CASE("select_k keeps only the mandatory prefix when every stack passes") {
    Rng rng(84);
    HybridModel model = dense_chain({64, 64, 64, 64}, 64, rng);
    std::vector<LayerStack> stacks(2);
    stacks[0] = {"stack1", 2, 3, WorkloadShape{32, 64, 64, 1, 1, 1}};
    stacks[1] = {"stack2", 4, 4, WorkloadShape{32, 64, 64, 1, 1, 1}};
    ProfilerConfig cfg;
    cfg.tau = 2;
    ScriptedClock clock({50, 50, 100, 100, 50, 50, 100, 100});
    const ProfileResult result = select_k(model, stacks, cfg, clock, rng);
    CHECK(result.k_hat == 1);
}

TEST_CASE("a later failing stack does not move K back up") {
    Rng rng(85);
    HybridModel model = dense_chain({64, 64, 64, 64}, 64, rng);
    std::vector<LayerStack> stacks(2);
    stacks[0] = {"stack1", 2, 3, WorkloadShape{32, 64, 64, 1, 1, 1}};
    stacks[1] = {"stack2", 4, 4, WorkloadShape{32, 64, 64, 1, 1, 1}};
    ProfilerConfig cfg;
    cfg.tau = 2;
    ScriptedClock clock({50, 50, 100, 100, 95, 95, 100, 100});
    const ProfileResult result = select_k(model, stacks, cfg, clock, rng);
    CHECK(result.k_hat == 1); // stack2 fails but the prefix is already broken
}

TEST_CASE("raising upsilon never decreases K") {
    Rng rng(86);
    HybridModel model = dense_chain({64, 64, 64, 64}, 64, rng);
    std::vector<LayerStack> stacks(2);
    stacks[0] = {"stack1", 2, 3, WorkloadShape{32, 64, 64, 1, 1, 1}};
    stacks[1] = {"stack2", 4, 4, WorkloadShape{32, 64, 64, 1, 1, 1}};
    ProfilerConfig cfg;
    cfg.tau = 2;
    count prev = 0;
    for (const double upsilon : {1.1, 1.5, 2.0}) {
        cfg.upsilon = upsilon;
        ScriptedClock clock({100, 100, 120, 120, 100, 100, 180, 180});
        const count k = select_k(model, stacks, cfg, clock, rng).k_hat;
        CHECK(k >= prev);
        prev = k;
    }
}

TEST_CASE("stack partition groups contiguous same-shape runs") {
    Rng rng(87);
    HybridModel model = dense_chain({128, 128, 128, 256, 256}, 64, rng);
    // Weight layers: fc1 64->128, fc2/fc3 128->128, fc4 128->256,
    // fc5 256->256, fc6 classifier.
    const auto stacks = stacks_from_model(model, 32);
    REQUIRE(stacks.size() == 3);
    CHECK(stacks[0].l_beg == 2);
    CHECK(stacks[0].l_end == 3);
    CHECK(stacks[1].l_beg == 4);
    CHECK(stacks[1].l_end == 4);
    CHECK(stacks[2].l_beg == 5);
    CHECK(stacks[2].l_end == 5);
    CHECK(stacks[0].workload.batch == 32);
    CHECK(stacks[0].workload.in_channels == 128);
}

TEST_CASE("profiler input validation") {
    Rng rng(88);
    HybridModel model = dense_chain({16}, 8, rng);
    ProfilerConfig cfg;
    WallClock clock;
    CHECK_THROWS_AS(select_k(model, {}, cfg, clock, rng), ProfileError);

    LayerStack bad{"s", 5, 9, {}};
    CHECK_THROWS_AS(benchmark_stack(model, bad, cfg, clock, rng), ProfileError);

    cfg.tau = 1;
    LayerStack ok{"s", 1, 1, WorkloadShape{4, 8, 16, 1, 1, 1}};
    CHECK_THROWS_AS(benchmark_stack(model, ok, cfg, clock, rng), ProfileError);
}

TEST_CASE("real clock reports positive durations with stable ordering") {
    Rng rng(89);
    HybridModel model = dense_chain({256, 256, 256}, 64, rng);
    LayerStack stack{"mid", 2, 3, WorkloadShape{128, 256, 256, 1, 1, 1}};
    ProfilerConfig cfg;
    cfg.tau = 3;
    WallClock clock;
    for (int repeat = 0; repeat < 3; ++repeat) {
        const auto [avg_full, avg_low] =
            benchmark_stack(model, stack, cfg, clock, rng);
        CHECK(avg_full > 0.0);
        CHECK(avg_low > 0.0);
        CHECK(avg_full > avg_low); // rank 64 halves the work of a 256x256 layer
    }
}
