#include "lrt/regularization.hpp"

namespace lrt {

std::pair<DenseMatrix, DenseMatrix> frobenius_decay_grads(const DenseMatrix& u,
                                                          const DenseMatrix& v_t,
                                                          double lambda) {
    if (u.cols() != v_t.rows()) {
        throw ShapeError("factor inner dimensions: " + std::to_string(u.cols()) +
                         " vs " + std::to_string(v_t.rows()));
    }
    if (lambda < 0.0) throw InvalidInput("decay lambda must be >= 0");
    if (lambda == 0.0) {
        return {DenseMatrix(u.rows(), u.cols()), DenseMatrix(v_t.rows(), v_t.cols())};
    }
    const DenseMatrix p = matmul(u, v_t); // shared term
    DenseMatrix grad_u = matmul(p, transpose(v_t));
    DenseMatrix grad_v_t = matmul(transpose(u), p);
    for (double& x : grad_u.storage()) x *= lambda;
    for (double& x : grad_v_t.storage()) x *= lambda;
    return {std::move(grad_u), std::move(grad_v_t)};
}

DenseMatrix l2_decay_grad(const DenseMatrix& w, double lambda) {
    if (lambda < 0.0) throw InvalidInput("decay lambda must be >= 0");
    DenseMatrix g(w.rows(), w.cols());
    if (lambda == 0.0) return g;
    for (count i = 0; i < w.size(); ++i) {
        g.storage()[i] = lambda * w.storage()[i];
    }
    return g;
}

const char* decay_scheme_name(DecayScheme scheme) {
    switch (scheme) {
        case DecayScheme::frobenius: return "frobenius";
        case DecayScheme::l2: return "l2";
        case DecayScheme::none: return "none";
    }
    return "none";
}

DecayScheme decay_scheme_from_name(const std::string& name) {
    if (name == "frobenius") return DecayScheme::frobenius;
    if (name == "l2") return DecayScheme::l2;
    if (name == "none") return DecayScheme::none;
    throw InvalidInput("unknown decay scheme: " + name);
}

} // namespace lrt
