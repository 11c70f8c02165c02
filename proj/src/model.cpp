#include "lrt/model.hpp"

#include <algorithm>
#include <cmath>

namespace lrt {

namespace {

struct ConvGeom {
    count in_c, h, w, out_c, k, pad, oh, ow;
};

ConvGeom geom(const Layer& l) {
    const count oh = l.in_shape.height + 2 * l.pad - l.kernel + 1;
    const count ow = l.in_shape.width + 2 * l.pad - l.kernel + 1;
    return {l.in_channels, l.in_shape.height, l.in_shape.width,
            l.out_channels, l.kernel,         l.pad,
            oh,             ow};
}

// Patch matrix of shape (B*oh*ow) x (m*k^2); column order (channel,
// kernel-row, kernel-col) fastest-last, matching the kernel unroll order.
DenseMatrix im2col(const DenseMatrix& x, const ConvGeom& g) {
    const count batch = x.rows();
    DenseMatrix patches(batch * g.oh * g.ow, g.in_c * g.k * g.k);
    const count cols = patches.cols();
    for (count b = 0; b < batch; ++b) {
        const double* xb = x.data() + b * x.cols();
        for (count oh = 0; oh < g.oh; ++oh) {
            for (count ow = 0; ow < g.ow; ++ow) {
                double* row =
                    patches.data() + ((b * g.oh + oh) * g.ow + ow) * cols;
                for (count c = 0; c < g.in_c; ++c) {
                    for (count kr = 0; kr < g.k; ++kr) {
                        const long ih = static_cast<long>(oh + kr) -
                                        static_cast<long>(g.pad);
                        for (count kc = 0; kc < g.k; ++kc) {
                            const long iw = static_cast<long>(ow + kc) -
                                            static_cast<long>(g.pad);
                            double v = 0.0;
                            if (ih >= 0 && ih < static_cast<long>(g.h) &&
                                iw >= 0 && iw < static_cast<long>(g.w)) {
                                v = xb[(c * g.h + ih) * g.w + iw];
                            }
                            row[(c * g.k + kr) * g.k + kc] = v;
                        }
                    }
                }
            }
        }
    }
    return patches;
}

void col2im_accumulate(const DenseMatrix& dpatches, const ConvGeom& g,
                       DenseMatrix& dx) {
    const count batch = dx.rows();
    const count cols = dpatches.cols();
    for (count b = 0; b < batch; ++b) {
        double* xb = dx.data() + b * dx.cols();
        for (count oh = 0; oh < g.oh; ++oh) {
            for (count ow = 0; ow < g.ow; ++ow) {
                const double* row =
                    dpatches.data() + ((b * g.oh + oh) * g.ow + ow) * cols;
                for (count c = 0; c < g.in_c; ++c) {
                    for (count kr = 0; kr < g.k; ++kr) {
                        const long ih = static_cast<long>(oh + kr) -
                                        static_cast<long>(g.pad);
                        if (ih < 0 || ih >= static_cast<long>(g.h)) continue;
                        for (count kc = 0; kc < g.k; ++kc) {
                            const long iw = static_cast<long>(ow + kc) -
                                            static_cast<long>(g.pad);
                            if (iw < 0 || iw >= static_cast<long>(g.w)) continue;
                            xb[(c * g.h + ih) * g.w + iw] +=
                                row[(c * g.k + kr) * g.k + kc];
                        }
                    }
                }
            }
        }
    }
}

// (B*oh*ow) x n product rows -> B x (n, oh, ow) activation rows.
DenseMatrix scatter_conv_output(const DenseMatrix& prod, const ConvGeom& g,
                                count batch, const std::vector<double>& bias) {
    DenseMatrix out(batch, g.out_c * g.oh * g.ow);
    for (count b = 0; b < batch; ++b) {
        double* ob = out.data() + b * out.cols();
        for (count oh = 0; oh < g.oh; ++oh) {
            for (count ow = 0; ow < g.ow; ++ow) {
                const double* row =
                    prod.data() + ((b * g.oh + oh) * g.ow + ow) * g.out_c;
                for (count n = 0; n < g.out_c; ++n) {
                    const double add = bias.empty() ? 0.0 : bias[n];
                    ob[(n * g.oh + oh) * g.ow + ow] = row[n] + add;
                }
            }
        }
    }
    return out;
}

DenseMatrix gather_conv_grad(const DenseMatrix& dout, const ConvGeom& g,
                             count batch) {
    DenseMatrix dprod(batch * g.oh * g.ow, g.out_c);
    for (count b = 0; b < batch; ++b) {
        const double* db = dout.data() + b * dout.cols();
        for (count oh = 0; oh < g.oh; ++oh) {
            for (count ow = 0; ow < g.ow; ++ow) {
                double* row =
                    dprod.data() + ((b * g.oh + oh) * g.ow + ow) * g.out_c;
                for (count n = 0; n < g.out_c; ++n) {
                    row[n] = db[(n * g.oh + oh) * g.ow + ow];
                }
            }
        }
    }
    return dprod;
}

void add_bias_rows(DenseMatrix& m, const std::vector<double>& bias) {
    if (bias.empty()) return;
    for (count i = 0; i < m.rows(); ++i) {
        double* row = m.data() + i * m.cols();
        for (count j = 0; j < m.cols(); ++j) row[j] += bias[j];
    }
}

void relu_inplace(DenseMatrix& m) {
    for (double& v : m.storage()) {
        if (v < 0.0) v = 0.0;
    }
}

// dY masked by the stored post-activation: zero where the unit was off.
void relu_backward_inplace(DenseMatrix& dy, const DenseMatrix& out) {
    const double* o = out.data();
    double* d = dy.data();
    for (count i = 0; i < dy.size(); ++i) {
        if (o[i] <= 0.0) d[i] = 0.0;
    }
}

void accumulate_bias_grad(const DenseMatrix& d, std::vector<double>& gbias) {
    if (gbias.empty()) return;
    for (count i = 0; i < d.rows(); ++i) {
        const double* row = d.data() + i * d.cols();
        for (count j = 0; j < d.cols(); ++j) gbias[j] += row[j];
    }
}

void add_scaled_into(DenseMatrix& dst, const DenseMatrix& src) {
    for (count i = 0; i < dst.size(); ++i) {
        dst.storage()[i] += src.storage()[i];
    }
}

} // namespace

const Layer* HybridModel::find(const std::string& name) const {
    for (const auto& l : layers) {
        if (l.name == name) return &l;
    }
    return nullptr;
}

Layer* HybridModel::find(const std::string& name) {
    for (auto& l : layers) {
        if (l.name == name) return &l;
    }
    return nullptr;
}

HybridModel build_model(const ModelSpec& spec, Rng& rng) {
    if (spec.num_classes < 2) throw InvalidInput("model needs >= 2 classes");
    HybridModel model;
    model.input = spec.input;
    model.num_classes = spec.num_classes;

    Shape3 cur = spec.input;
    std::vector<LayerDesc> descs = spec.hidden;
    LayerDesc classifier;
    classifier.kind = LayerKind::dense;
    classifier.out = spec.num_classes;
    classifier.relu = false;
    classifier.bias = true;
    descs.push_back(classifier);

    count fc_idx = 0, conv_idx = 0;
    for (const auto& d : descs) {
        Layer l;
        l.kind = d.kind;
        l.index = model.layers.size() + 1;
        l.relu = d.relu;
        l.has_bias = d.bias;
        l.in_shape = cur;
        if (d.kind == LayerKind::conv) {
            if (d.kernel < 1) throw InvalidInput("conv layer needs kernel >= 1");
            l.kernel = d.kernel;
            l.pad = d.padding < 0 ? d.kernel / 2 : static_cast<count>(d.padding);
            l.in_channels = cur.channels;
            l.out_channels = d.out;
            const long oh = static_cast<long>(cur.height) + 2 * l.pad - l.kernel + 1;
            const long ow = static_cast<long>(cur.width) + 2 * l.pad - l.kernel + 1;
            if (oh < 1 || ow < 1) throw InvalidInput("conv output collapses to zero");
            l.out_shape = {d.out, static_cast<count>(oh), static_cast<count>(ow)};
            l.name = "conv" + std::to_string(++conv_idx);
            l.w = DenseMatrix(l.in_channels * l.kernel * l.kernel, l.out_channels);
        } else {
            l.in_features = cur.elems();
            l.out_features = d.out;
            l.out_shape = {d.out, 1, 1};
            l.name = "fc" + std::to_string(++fc_idx);
            l.w = DenseMatrix(l.in_features, l.out_features);
        }
        const double scale = std::sqrt(2.0 / static_cast<double>(l.rows()));
        for (double& v : l.w.storage()) v = rng.normal() * scale;
        if (l.has_bias) l.bias.assign(l.cols(), 0.0);

        l.gw = DenseMatrix(l.w.rows(), l.w.cols());
        l.vw = DenseMatrix(l.w.rows(), l.w.cols());
        l.gbias.assign(l.bias.size(), 0.0);
        l.vbias.assign(l.bias.size(), 0.0);
        cur = l.out_shape;
        model.layers.push_back(std::move(l));
    }
    return model;
}

DenseMatrix forward(const HybridModel& model, const DenseMatrix& x,
                    ForwardContext* ctx) {
    if (x.cols() != model.input.elems()) {
        throw ShapeError("input has " + std::to_string(x.cols()) +
                         " features, model expects " +
                         std::to_string(model.input.elems()));
    }
    if (ctx) {
        ctx->caches.assign(model.layers.size(), {});
        ctx->batch = x.rows();
    }
    DenseMatrix cur = x;
    for (count li = 0; li < model.layers.size(); ++li) {
        const Layer& l = model.layers[li];
        LayerCache* cache = ctx ? &ctx->caches[li] : nullptr;
        if (cache) cache->input = cur;
        DenseMatrix out;
        if (l.kind == LayerKind::dense) {
            if (!l.factorized) {
                out = matmul(cur, l.w);
            } else {
                DenseMatrix mid = matmul(cur, l.u);
                out = matmul(mid, l.v_t);
                if (cache) cache->mid = std::move(mid);
            }
            add_bias_rows(out, l.bias);
        } else {
            const ConvGeom g = geom(l);
            DenseMatrix patches = im2col(cur, g);
            DenseMatrix prod;
            if (!l.factorized) {
                prod = matmul(patches, l.w);
            } else {
                DenseMatrix mid = matmul(patches, l.u);
                prod = matmul(mid, l.v_t);
                if (cache) cache->mid = std::move(mid);
            }
            out = scatter_conv_output(prod, g, cur.rows(), l.bias);
            if (cache) cache->patches = std::move(patches);
        }
        if (l.relu) relu_inplace(out);
        if (cache) cache->output = out;
        cur = std::move(out);
    }
    return cur;
}

void backward(HybridModel& model, const ForwardContext& ctx,
              const DenseMatrix& dlogits) {
    DenseMatrix d = dlogits;
    for (count li = model.layers.size(); li-- > 0;) {
        Layer& l = model.layers[li];
        const LayerCache& cache = ctx.caches[li];
        if (l.relu) relu_backward_inplace(d, cache.output);

        if (l.kind == LayerKind::dense) {
            accumulate_bias_grad(d, l.gbias);
            DenseMatrix dx;
            if (!l.factorized) {
                add_scaled_into(l.gw, matmul(transpose(cache.input), d));
                dx = matmul(d, transpose(l.w));
            } else {
                add_scaled_into(l.gv_t, matmul(transpose(cache.mid), d));
                DenseMatrix dmid = matmul(d, transpose(l.v_t));
                add_scaled_into(l.gu, matmul(transpose(cache.input), dmid));
                dx = matmul(dmid, transpose(l.u));
            }
            d = std::move(dx);
        } else {
            const ConvGeom g = geom(l);
            DenseMatrix dprod = gather_conv_grad(d, g, ctx.batch);
            accumulate_bias_grad(dprod, l.gbias);
            DenseMatrix dpatches;
            if (!l.factorized) {
                add_scaled_into(l.gw, matmul(transpose(cache.patches), dprod));
                dpatches = matmul(dprod, transpose(l.w));
            } else {
                add_scaled_into(l.gv_t, matmul(transpose(cache.mid), dprod));
                DenseMatrix dmid = matmul(dprod, transpose(l.v_t));
                add_scaled_into(l.gu, matmul(transpose(cache.patches), dmid));
                dpatches = matmul(dmid, transpose(l.u));
            }
            DenseMatrix dx(ctx.batch, l.in_shape.elems());
            col2im_accumulate(dpatches, g, dx);
            d = std::move(dx);
        }
    }
}

void zero_gradients(HybridModel& model) {
    for (auto& l : model.layers) {
        auto clear = [](DenseMatrix& m) {
            std::fill(m.storage().begin(), m.storage().end(), 0.0);
        };
        if (l.factorized) {
            clear(l.gu);
            clear(l.gv_t);
        } else {
            clear(l.gw);
        }
        std::fill(l.gbias.begin(), l.gbias.end(), 0.0);
    }
}

double softmax_cross_entropy(const DenseMatrix& logits,
                             std::span<const count> labels,
                             DenseMatrix* dlogits) {
    const count batch = logits.rows();
    const count classes = logits.cols();
    if (labels.size() != batch) throw ShapeError("label count != batch size");
    if (dlogits) *dlogits = DenseMatrix(batch, classes);
    double loss = 0.0;
    std::vector<double> p(classes);
    for (count b = 0; b < batch; ++b) {
        const double* row = logits.data() + b * classes;
        double mx = row[0];
        for (count c = 1; c < classes; ++c) mx = std::max(mx, row[c]);
        double z = 0.0;
        for (count c = 0; c < classes; ++c) {
            p[c] = std::exp(row[c] - mx);
            z += p[c];
        }
        const count y = labels[b];
        if (y >= classes) throw InvalidInput("label out of range");
        loss += -(std::log(p[y]) - std::log(z));
        if (dlogits) {
            double* drow = dlogits->data() + b * classes;
            for (count c = 0; c < classes; ++c) {
                drow[c] = (p[c] / z - (c == y ? 1.0 : 0.0)) /
                          static_cast<double>(batch);
            }
        }
    }
    return loss / static_cast<double>(batch);
}

count param_count(const HybridModel& model) {
    count total = 0;
    for (const auto& l : model.layers) {
        total += l.factorized ? l.u.size() + l.v_t.size() : l.w.size();
        total += l.bias.size();
    }
    return total;
}

LayerCost layer_cost(const Layer& l, count batch) {
    const double b = static_cast<double>(batch);
    LayerCost cost;
    double positions = 1.0; // spatial outputs per sample (1 for dense)
    if (l.kind == LayerKind::conv) {
        positions = static_cast<double>(l.out_shape.height * l.out_shape.width);
    }
    const double rows = static_cast<double>(l.rows());
    const double cols = static_cast<double>(l.cols());
    if (!l.factorized) {
        cost.macs = b * positions * rows * cols;
        cost.elements = rows * cols + static_cast<double>(l.bias.size());
    } else {
        const double r = static_cast<double>(l.u.cols());
        cost.macs = b * positions * r * (rows + cols);
        cost.elements = r * (rows + cols) + static_cast<double>(l.bias.size());
        cost.elements += b * positions * r; // intermediate activations
    }
    cost.elements += b * static_cast<double>(l.in_shape.elems() + l.out_shape.elems());
    return cost;
}

double flops_estimate(const HybridModel& model, count batch) {
    double total = 0.0;
    for (const auto& l : model.layers) total += layer_cost(l, batch).macs;
    return total;
}

} // namespace lrt
