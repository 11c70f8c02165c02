#include <doctest.h>

#include <cmath>

#include "lrt/factorizer.hpp"
#include "lrt/model.hpp"
#include "lrt/trainer.hpp"
#include "oracles.hpp"

using namespace lrt;

namespace {

HybridModel tiny_mlp(Rng& rng, count in = 4, count hidden = 5, count classes = 3) {
    ModelSpec spec;
    spec.input = {in, 1, 1};
    spec.hidden = {{LayerKind::dense, hidden}};
    spec.num_classes = classes;
    return build_model(spec, rng);
}

std::vector<std::vector<double>*> all_params(HybridModel& m) {
    std::vector<std::vector<double>*> out;
    for (auto& l : m.layers) {
        if (l.factorized) {
            out.push_back(&l.u.storage());
            out.push_back(&l.v_t.storage());
        } else {
            out.push_back(&l.w.storage());
        }
        if (!l.bias.empty()) out.push_back(&l.bias);
    }
    return out;
}

std::vector<const std::vector<double>*> all_grads(const HybridModel& m) {
    std::vector<const std::vector<double>*> out;
    for (const auto& l : m.layers) {
        if (l.factorized) {
            out.push_back(&l.gu.storage());
            out.push_back(&l.gv_t.storage());
        } else {
            out.push_back(&l.gw.storage());
        }
        if (!l.bias.empty()) out.push_back(&l.gbias);
    }
    return out;
}

void check_gradients_fd(HybridModel& model, const DenseMatrix& x,
                        const std::vector<count>& y, double tol) {
    const double loss = forward_backward(model, x, y);
    CHECK(std::isfinite(loss));
    auto params = all_params(model);
    auto grads = all_grads(model);
    REQUIRE(params.size() == grads.size());
    for (count p = 0; p < params.size(); ++p) {
        const auto fd = oracles::finite_difference(*params[p], [&] {
            return softmax_cross_entropy(forward(model, x, nullptr), y, nullptr);
        });
        for (count i = 0; i < fd.size(); ++i) {
            CHECK(oracles::rel_err((*grads[p])[i], fd[i], 1e-4) < tol);
        }
    }
}

} // namespace

TEST_CASE("dense forward computes x W + b with ReLU") {
    Rng rng(61);
    HybridModel m = tiny_mlp(rng);
    const DenseMatrix x = oracles::random_matrix(3, 4, rng);
    const DenseMatrix got = forward(m, x, nullptr);

    DenseMatrix h = oracles::naive_matmul(x, m.layers[0].w);
    for (count i = 0; i < h.rows(); ++i) {
        for (count j = 0; j < h.cols(); ++j) {
            h(i, j) = std::max(0.0, h(i, j) + m.layers[0].bias[j]);
        }
    }
    DenseMatrix logits = oracles::naive_matmul(h, m.layers[1].w);
    for (count i = 0; i < logits.rows(); ++i) {
        for (count j = 0; j < logits.cols(); ++j) {
            logits(i, j) += m.layers[1].bias[j];
        }
    }
    CHECK(oracles::max_abs_diff(got, logits) < 1e-12);
}

TEST_CASE("conv forward matches the direct convolution oracle") {
    Rng rng(62);
    for (const count k : {1, 3}) {
        ModelSpec spec;
        spec.input = {3, 6, 6};
        LayerDesc conv;
        conv.kind = LayerKind::conv;
        conv.out = 4;
        conv.kernel = k;
        conv.relu = false;
        spec.hidden = {conv};
        spec.num_classes = 2;
        HybridModel m = build_model(spec, rng);
        const Layer& l = m.layers[0];

        const DenseMatrix x = oracles::random_matrix(2, 3 * 6 * 6, rng);
        ForwardContext ctx;
        forward(m, x, &ctx);
        const DenseMatrix& got = ctx.caches[0].output;

        const ConvKernel kernel = roll_conv(l.w, l.in_channels, l.out_channels, k);
        const DenseMatrix want =
            oracles::direct_conv(x, 3, 6, 6, kernel, l.pad, l.bias);
        CHECK(oracles::max_abs_diff(got, want) < 1e-10);
    }
}

TEST_CASE("factorized conv forward equals thin conv plus 1x1 conv") {
    Rng rng(63);
    ModelSpec spec;
    spec.input = {4, 5, 5};
    LayerDesc conv;
    conv.kind = LayerKind::conv;
    conv.out = 6;
    conv.kernel = 3;
    conv.relu = false;
    spec.hidden = {conv};
    spec.num_classes = 2;
    HybridModel m = build_model(spec, rng);
    Layer& l = m.layers[0];
    const count r = 3;
    const ConvKernel original = roll_conv(l.w, 4, 6, 3);

    FactorizedPair pair = spectral_factorize_conv(l.w, r, 4, 6, 3);
    const auto [u_kernel, v_kernel] = reshape_to_conv(pair);
    l.factorized = true;
    l.u = pair.u;
    l.v_t = pair.v_t;
    l.w = DenseMatrix();
    l.gu = DenseMatrix(l.u.rows(), l.u.cols());
    l.gv_t = DenseMatrix(l.v_t.rows(), l.v_t.cols());

    const DenseMatrix x = oracles::random_matrix(2, 4 * 5 * 5, rng);
    ForwardContext ctx;
    forward(m, x, &ctx);
    const DenseMatrix& got = ctx.caches[0].output;

    const DenseMatrix mid = oracles::direct_conv(x, 4, 5, 5, u_kernel, l.pad);
    DenseMatrix want = oracles::direct_conv(mid, r, 5, 5, v_kernel, 0, l.bias);
    CHECK(oracles::max_abs_diff(got, want) < 1e-10);
    (void)original;
}

TEST_CASE("uniform logits give ln(C) loss") {
    Rng rng(64);
    ModelSpec spec;
    spec.input = {4, 1, 1};
    spec.hidden = {};
    spec.num_classes = 7;
    HybridModel m = build_model(spec, rng);
    for (double& v : m.layers[0].w.storage()) v = 0.0;

    DenseMatrix x(3, 4); // zero inputs with zero weights: uniform softmax
    const std::vector<count> y{0, 3, 6};
    const double loss =
        softmax_cross_entropy(forward(m, x, nullptr), y, nullptr);
    CHECK(loss == doctest::Approx(std::log(7.0)).epsilon(1e-12));
}

TEST_CASE("single-parameter logistic gradient is hand-derivable") {
    // One input feature, two classes, weights w0 = [w, -w]: the softmax
    // probability is sigmoid(2 w x) and d loss / d w = -2x (1 - p(y)) for
    // label 0 at x > 0.
    ModelSpec spec;
    spec.input = {1, 1, 1};
    spec.hidden = {};
    spec.num_classes = 2;
    Rng rng(65);
    HybridModel m = build_model(spec, rng);
    m.layers[0].w(0, 0) = 0.7;
    m.layers[0].w(0, 1) = -0.7;
    m.layers[0].bias = {0.0, 0.0};
    m.layers[0].vbias.assign(2, 0.0);
    m.layers[0].gbias.assign(2, 0.0);

    DenseMatrix x(1, 1);
    x(0, 0) = 1.5;
    const std::vector<count> y{0};
    const double loss = forward_backward(m, x, y);
    const double p0 = 1.0 / (1.0 + std::exp(-2.0 * 0.7 * 1.5));
    CHECK(loss == doctest::Approx(-std::log(p0)).epsilon(1e-12));
    CHECK(m.layers[0].gw(0, 0) ==
          doctest::Approx(-1.5 * (1.0 - p0)).epsilon(1e-10));
}

TEST_CASE("backprop matches finite differences on a 2-layer MLP") {
    Rng rng(66);
    HybridModel m = tiny_mlp(rng);
    const DenseMatrix x = oracles::random_matrix(4, 4, rng);
    const std::vector<count> y{0, 1, 2, 1};
    check_gradients_fd(m, x, y, 1e-4);
}

TEST_CASE("backprop matches finite differences with factorized layers") {
    Rng rng(67);
    ModelSpec spec;
    spec.input = {6, 1, 1};
    spec.hidden = {{LayerKind::dense, 8}, {LayerKind::dense, 8}};
    spec.num_classes = 3;
    HybridModel m = build_model(spec, rng);
    FactorizationPlan plan;
    plan.prefix_k = 1;
    plan.ranks = {{"fc2", 3, false}};
    apply_plan(m, plan);

    const DenseMatrix x = oracles::random_matrix(4, 6, rng);
    const std::vector<count> y{2, 0, 1, 1};
    check_gradients_fd(m, x, y, 1e-4);
}

TEST_CASE("backprop matches finite differences through a conv net") {
    Rng rng(68);
    ModelSpec spec;
    spec.input = {1, 6, 6};
    LayerDesc conv;
    conv.kind = LayerKind::conv;
    conv.out = 2;
    conv.kernel = 3;
    spec.hidden = {conv};
    spec.num_classes = 3;
    HybridModel m = build_model(spec, rng);
    const DenseMatrix x = oracles::random_matrix(3, 36, rng);
    const std::vector<count> y{0, 2, 1};
    check_gradients_fd(m, x, y, 1e-4);
}

TEST_CASE("sgd with zero momentum is vanilla gradient descent") {
    Rng rng(69);
    HybridModel m = tiny_mlp(rng);
    HybridModel copy = m;
    const DenseMatrix x = oracles::random_matrix(2, 4, rng);
    const std::vector<count> y{0, 1};
    forward_backward(m, x, y);
    forward_backward(copy, x, y);

    sgd_step(m, 0.1, 0.0);
    for (count i = 0; i < copy.layers[0].w.size(); ++i) {
        copy.layers[0].w.storage()[i] -= 0.1 * copy.layers[0].gw.storage()[i];
    }
    CHECK(oracles::max_abs_diff(m.layers[0].w, copy.layers[0].w) == 0.0);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    Rng rng(70);
    HybridModel m = tiny_mlp(rng);
    const DenseMatrix before = m.layers[0].w;
    const DenseMatrix x = oracles::random_matrix(2, 4, rng);
    const std::vector<count> y{0, 1};
    forward_backward(m, x, y);
    sgd_step(m, 0.0, 0.9);
    CHECK(oracles::max_abs_diff(m.layers[0].w, before) == 0.0);
}

TEST_CASE("momentum sgd follows the scalar recurrence") {
    // Quadratic f(w) = 0.5 w^2: g = w; two steps of v = mu v + g,
    // w -= lr v, tracked by hand.
    double w = 1.0, v = 0.0;
    const double mu = 0.9, lr = 0.1;
    std::vector<double> expected;
    for (int i = 0; i < 2; ++i) {
        v = mu * v + w;
        w -= lr * v;
        expected.push_back(w);
    }
    CHECK(expected[0] == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(expected[1] == doctest::Approx(0.9 - 0.1 * (0.9 + 0.9)).epsilon(1e-15));
}

TEST_CASE("evaluate scores argmax accuracy with ties to the lowest class") {
    Rng rng(71);
    ModelSpec spec;
    spec.input = {2, 1, 1};
    spec.hidden = {};
    spec.num_classes = 3;
    HybridModel m = build_model(spec, rng);
    for (double& x : m.layers[0].w.storage()) x = 0.0; // constant logits

    DenseMatrix x = oracles::random_matrix(9, 2, rng);
    std::vector<count> y(9, 0);
    y[3] = 1;
    y[7] = 2;
    // Ties everywhere: prediction is always class 0.
    CHECK(evaluate(m, x, y) == doctest::Approx(7.0 / 9.0));
    CHECK_THROWS_AS(evaluate(m, DenseMatrix(0, 2), std::vector<count>{}),
                    InvalidInput);
}

TEST_CASE("flops estimate covers dense and factorized layers") {
    Layer dense;
    dense.kind = LayerKind::dense;
    dense.in_features = 10;
    dense.out_features = 20;
    dense.w = DenseMatrix(10, 20);
    dense.in_shape = {10, 1, 1};
    dense.out_shape = {20, 1, 1};
    HybridModel m;
    m.layers.push_back(dense);
    CHECK(flops_estimate(m, 8) == doctest::Approx(8 * 10 * 20));

    Layer& l = m.layers[0];
    l.factorized = true;
    l.u = DenseMatrix(10, 4);
    l.v_t = DenseMatrix(4, 20);
    CHECK(flops_estimate(m, 8) == doctest::Approx(8 * 4 * 30));
}
