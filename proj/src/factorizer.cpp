#include "lrt/factorizer.hpp"

#include <algorithm>
#include <cmath>

namespace lrt {

const PlanEntry* FactorizationPlan::find(const std::string& layer) const {
    for (const auto& e : ranks) {
        if (e.layer == layer) return &e;
    }
    return nullptr;
}

DenseMatrix unroll_conv(const ConvKernel& kernel) {
    const count m = kernel.in_channels, n = kernel.out_channels, k = kernel.kernel;
    DenseMatrix w(m * k * k, n);
    for (count o = 0; o < n; ++o) {
        for (count c = 0; c < m; ++c) {
            for (count kr = 0; kr < k; ++kr) {
                for (count kc = 0; kc < k; ++kc) {
                    w((c * k + kr) * k + kc, o) = kernel.at(o, c, kr, kc);
                }
            }
        }
    }
    return w;
}

ConvKernel roll_conv(const DenseMatrix& unrolled, count in_channels,
                     count out_channels, count kernel) {
    if (unrolled.rows() != in_channels * kernel * kernel ||
        unrolled.cols() != out_channels) {
        throw ShapeError("unrolled matrix does not match kernel dims");
    }
    ConvKernel k(out_channels, in_channels, kernel);
    for (count o = 0; o < out_channels; ++o) {
        for (count c = 0; c < in_channels; ++c) {
            for (count kr = 0; kr < kernel; ++kr) {
                for (count kc = 0; kc < kernel; ++kc) {
                    k.at(o, c, kr, kc) = unrolled((c * kernel + kr) * kernel + kc, o);
                }
            }
        }
    }
    return k;
}

FactorizedPair spectral_factorize(const DenseMatrix& w, count r) {
    const count full = std::min(w.rows(), w.cols());
    if (r < 1 || r > full) {
        throw RankError("rank " + std::to_string(r) + " outside [1, " +
                        std::to_string(full) + "]");
    }
    const SvdResult dec = svd(w);
    FactorizedPair pair;
    pair.rank = r;
    pair.u = DenseMatrix(w.rows(), r);
    pair.v_t = DenseMatrix(r, w.cols());
    for (count i = 0; i < r; ++i) {
        const double root = std::sqrt(dec.singular[i]);
        for (count row = 0; row < w.rows(); ++row) {
            pair.u(row, i) = dec.left(row, i) * root;
        }
        for (count col = 0; col < w.cols(); ++col) {
            pair.v_t(i, col) = root * dec.right_t(i, col);
        }
    }
    return pair;
}

FactorizedPair spectral_factorize_conv(const DenseMatrix& unrolled, count r,
                                       count in_channels, count out_channels,
                                       count kernel) {
    if (unrolled.rows() != in_channels * kernel * kernel ||
        unrolled.cols() != out_channels) {
        throw ShapeError("unrolled matrix does not match conv dims");
    }
    FactorizedPair pair = spectral_factorize(unrolled, r);
    pair.origin = FactorizedPair::Origin::conv;
    pair.conv_in = in_channels;
    pair.conv_out = out_channels;
    pair.conv_kernel = kernel;
    return pair;
}

std::pair<ConvKernel, ConvKernel> reshape_to_conv(const FactorizedPair& pair) {
    if (pair.origin != FactorizedPair::Origin::conv) {
        throw OriginError("reshape_to_conv on a dense-origin pair");
    }
    const count m = pair.conv_in, n = pair.conv_out, k = pair.conv_kernel;
    ConvKernel u_kernel(pair.rank, m, k);
    for (count o = 0; o < pair.rank; ++o) {
        for (count c = 0; c < m; ++c) {
            for (count kr = 0; kr < k; ++kr) {
                for (count kc = 0; kc < k; ++kc) {
                    u_kernel.at(o, c, kr, kc) = pair.u((c * k + kr) * k + kc, o);
                }
            }
        }
    }
    ConvKernel v_kernel(n, pair.rank, 1);
    for (count o = 0; o < n; ++o) {
        for (count i = 0; i < pair.rank; ++i) {
            v_kernel.at(o, i, 0, 0) = pair.v_t(i, o);
        }
    }
    return {std::move(u_kernel), std::move(v_kernel)};
}

bool break_even(count rows, count cols, count r) {
    return r * (rows + cols) < rows * cols;
}

FactorizationPlan build_plan(const HybridModel& model,
                             std::span<const RankTrajectory> trajectories,
                             const std::map<std::string, std::vector<double>>& spectra,
                             count prefix_k, count switch_epoch,
                             const RankEstimatorConfig& estimator) {
    FactorizationPlan plan;
    plan.switch_epoch = switch_epoch;
    plan.prefix_k = prefix_k;
    plan.estimator = estimator;
    const count L = model.weight_layer_count();
    for (count idx = prefix_k + 1; idx < L; ++idx) {
        const Layer& layer = model.layer_at(idx);
        const auto spec_it = spectra.find(layer.name);
        if (spec_it == spectra.end()) {
            throw PlanError("no spectrum for layer " + layer.name);
        }
        double xi = 1.0;
        bool have_xi = false;
        for (const auto& t : trajectories) {
            if (t.layer_id() == layer.name) {
                xi = t.xi();
                have_xi = true;
                break;
            }
        }
        if (!have_xi) throw PlanError("no trajectory for layer " + layer.name);
        PlanEntry entry;
        entry.layer = layer.name;
        entry.rank = estimate_rank(spec_it->second, xi, estimator);
        entry.skip = !break_even(layer.rows(), layer.cols(), entry.rank);
        plan.ranks.push_back(std::move(entry));
    }
    return plan;
}

void apply_plan(HybridModel& model, const FactorizationPlan& plan) {
    const count L = model.weight_layer_count();
    for (const auto& entry : plan.ranks) {
        Layer* layer = model.find(entry.layer);
        if (!layer) throw PlanError("plan names unknown layer " + entry.layer);
        if (layer->index <= plan.prefix_k || layer->index == L) {
            throw PlanError("plan factorizes protected layer " + entry.layer);
        }
        if (entry.skip) continue;
        if (entry.rank < 1 || entry.rank > layer->full_rank()) {
            throw PlanError("plan rank " + std::to_string(entry.rank) +
                            " invalid for layer " + entry.layer);
        }
        FactorizedPair pair =
            layer->kind == LayerKind::conv
                ? spectral_factorize_conv(layer->w, entry.rank, layer->in_channels,
                                          layer->out_channels, layer->kernel)
                : spectral_factorize(layer->w, entry.rank);
        layer->factorized = true;
        layer->u = std::move(pair.u);
        layer->v_t = std::move(pair.v_t);
        layer->w = DenseMatrix();
        layer->gw = DenseMatrix();
        layer->vw = DenseMatrix();
        layer->gu = DenseMatrix(layer->u.rows(), layer->u.cols());
        layer->vu = DenseMatrix(layer->u.rows(), layer->u.cols());
        layer->gv_t = DenseMatrix(layer->v_t.rows(), layer->v_t.cols());
        layer->vv_t = DenseMatrix(layer->v_t.rows(), layer->v_t.cols());
    }
}

} // namespace lrt
