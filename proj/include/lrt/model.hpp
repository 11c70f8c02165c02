#ifndef LRT_MODEL_HPP
#define LRT_MODEL_HPP

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lrt/rng.hpp"
#include "lrt/tensor.hpp"

namespace lrt {

struct Shape3 {
    count channels = 1, height = 1, width = 1;
    count elems() const { return channels * height * width; }
    bool operator==(const Shape3&) const = default;
};

enum class LayerKind { dense, conv };

/// One entry of a model description. Conv layers use `out` as the filter
/// count and `kernel`/`padding` for geometry; dense layers use `out` as the
/// feature width. The final classifier layer is appended by the builder.
struct LayerDesc {
    LayerKind kind = LayerKind::dense;
    count out = 0;
    count kernel = 0;
    int padding = -1; // -1: same padding (kernel/2)
    bool relu = true;
    bool bias = true;
};

/// Shape-chained model description: input geometry, hidden layers, class
/// count. Hidden activations are ReLU, the loss is softmax cross-entropy.
struct ModelSpec {
    Shape3 input;
    std::vector<LayerDesc> hidden;
    count num_classes = 10;
};

/// A weight layer of the runtime network. Conv weights are stored in
/// unrolled (m*k^2 x n) form, the layout the factorizer and the im2col
/// forward pass share; the 4-D kernel view is materialized on demand.
/// When `factorized` is set the layer computes through the (u, v_t) pair
/// and `w` is empty. Bias (when present) applies after the v_t stage so the
/// affine map is preserved exactly at full rank.
struct Layer {
    LayerKind kind = LayerKind::dense;
    std::string name;
    count index = 0; // 1-based position among weight layers
    bool relu = false;
    bool has_bias = true;

    // conv geometry (kind == conv)
    count in_channels = 0, out_channels = 0, kernel = 0, pad = 0;

    // dense geometry (kind == dense): w is (in x out)
    count in_features = 0, out_features = 0;

    bool factorized = false;
    DenseMatrix w;
    DenseMatrix u, v_t;
    std::vector<double> bias;

    // gradient and momentum buffers, parallel to the weights
    DenseMatrix gw, vw, gu, vu, gv_t, vv_t;
    std::vector<double> gbias, vbias;

    Shape3 in_shape, out_shape;

    count rows() const { // effective weight rows (m or m*k^2)
        return kind == LayerKind::dense ? in_features
                                        : in_channels * kernel * kernel;
    }
    count cols() const {
        return kind == LayerKind::dense ? out_features : out_channels;
    }
    count full_rank() const { return std::min(rows(), cols()); }
    count rank() const { return factorized ? u.cols() : full_rank(); }
};

struct HybridModel {
    Shape3 input;
    count num_classes = 0;
    std::vector<Layer> layers; // weight layers only, in forward order

    count weight_layer_count() const { return layers.size(); }
    Layer& layer_at(count index1) { return layers.at(index1 - 1); }
    const Layer& layer_at(count index1) const { return layers.at(index1 - 1); }
    const Layer* find(const std::string& name) const;
    Layer* find(const std::string& name);
};

/// Builds and He-initializes the network; layer names are fc<i>/conv<i>
/// with i the 1-based weight-layer index.
HybridModel build_model(const ModelSpec& spec, Rng& rng);

/// Per-layer activation caches kept by the forward pass for reuse in
/// backward.
struct LayerCache {
    DenseMatrix input;   // B x in_elems
    DenseMatrix patches; // conv: (B*oh*ow) x (m*k^2)
    DenseMatrix mid;     // factorized: product with u
    DenseMatrix output;  // B x out_elems, post-activation
};

struct ForwardContext {
    std::vector<LayerCache> caches;
    count batch = 0;
};

/// Runs the network on a batch (rows = samples, row layout (c, h, w)
/// fastest-last). With a context the activations are cached for backward.
DenseMatrix forward(const HybridModel& model, const DenseMatrix& x,
                    ForwardContext* ctx);

/// Reverse pass from d(logits); accumulates into the layers' gradient
/// buffers (call zero_gradients first).
void backward(HybridModel& model, const ForwardContext& ctx,
              const DenseMatrix& dlogits);

void zero_gradients(HybridModel& model);

/// Mean softmax cross-entropy; when dlogits is non-null it receives
/// (softmax - onehot) / batch.
double softmax_cross_entropy(const DenseMatrix& logits,
                             std::span<const count> labels,
                             DenseMatrix* dlogits);

/// Trainable parameter count including biases.
count param_count(const HybridModel& model);

/// Multiply-accumulate count of one forward pass at the given batch size.
double flops_estimate(const HybridModel& model, count batch);

/// Forward MACs and elements touched (weights + activations) for one
/// layer at the given batch size; the profiler's device model charges from
/// these.
struct LayerCost {
    double macs = 0.0;
    double elements = 0.0;
};
LayerCost layer_cost(const Layer& layer, count batch);

} // namespace lrt

#endif
