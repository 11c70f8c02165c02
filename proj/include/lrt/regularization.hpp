#ifndef LRT_REGULARIZATION_HPP
#define LRT_REGULARIZATION_HPP

#include <string>
#include <utility>

#include "lrt/tensor.hpp"

namespace lrt {

/// frobenius: ||U V^T||_F^2 decay on factorized pairs, plain l2 on the
/// remaining full-rank layers. l2: plain decay on every weight matrix.
/// Biases and other vector parameters are always exempt.
enum class DecayScheme { frobenius, l2, none };

struct DecayConfig {
    double lambda = 0.0;
    DecayScheme scheme = DecayScheme::frobenius;
};

/// Gradients of (lambda/2) ||U V^T||_F^2:
///   grad_u = lambda * (U V^T) V,  grad_v_t = lambda * U^T (U V^T).
/// The product P = U V^T is computed once and reused, so exactly three
/// matrix products run per call (P, P*V, U^T*P). lambda = 0 short-circuits
/// to exact zeros.
std::pair<DenseMatrix, DenseMatrix> frobenius_decay_grads(const DenseMatrix& u,
                                                          const DenseMatrix& v_t,
                                                          double lambda);

/// Gradient of (lambda/2) ||w||_F^2: lambda * w elementwise.
DenseMatrix l2_decay_grad(const DenseMatrix& w, double lambda);

const char* decay_scheme_name(DecayScheme scheme);
DecayScheme decay_scheme_from_name(const std::string& name);

} // namespace lrt

#endif
