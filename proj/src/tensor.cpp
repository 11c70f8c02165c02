#include "lrt/tensor.hpp"

#include <cmath>

namespace lrt {

namespace {
thread_local std::uint64_t g_matmul_count = 0;
}

void MatmulCounter::reset() { g_matmul_count = 0; }
std::uint64_t MatmulCounter::value() { return g_matmul_count; }

DenseMatrix::DenseMatrix(count rows, count cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
        throw ShapeError("matrix data length " + std::to_string(data_.size()) +
                         " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
}

bool DenseMatrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

void DenseMatrix::require_finite(const std::string& what) const {
    if (!all_finite()) {
        throw InvalidInput(what + ": non-finite entry");
    }
}

ConvKernel::ConvKernel(count out_c, count in_c, count k)
    : out_channels(out_c), in_channels(in_c), kernel(k),
      data(out_c * in_c * k * k, 0.0) {
    if (k < 1) throw ShapeError("conv kernel size must be >= 1");
}

void matmul_into(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& c) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul inner dimensions: " + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()));
    }
    if (c.rows() != a.rows() || c.cols() != b.cols()) {
        throw ShapeError("matmul output shape mismatch");
    }
    ++g_matmul_count;
    const count m = a.rows(), k = a.cols(), n = b.cols();
    const double* pa = a.data();
    const double* pb = b.data();
    double* pc = c.data();
    // i-k-j order: the inner loop runs over contiguous rows of B and C,
    // which the compiler vectorizes.
    for (count i = 0; i < m; ++i) {
        double* ci = pc + i * n;
        const double* ai = pa + i * k;
        for (count kk = 0; kk < k; ++kk) {
            const double aik = ai[kk];
            if (aik == 0.0) continue;
            const double* bk = pb + kk * n;
            for (count j = 0; j < n; ++j) {
                ci[j] += aik * bk[j];
            }
        }
    }
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    DenseMatrix c(a.rows(), b.cols());
    matmul_into(a, b, c);
    return c;
}

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols(), a.rows());
    for (count i = 0; i < a.rows(); ++i) {
        for (count j = 0; j < a.cols(); ++j) {
            t(j, i) = a(i, j);
        }
    }
    return t;
}

double frobenius_norm(const std::vector<double>& v) {
    double sum = 0.0;
    for (double x : v) sum += x * x;
    return std::sqrt(sum);
}

double frobenius_norm(const DenseMatrix& a) { return frobenius_norm(a.storage()); }

} // namespace lrt
