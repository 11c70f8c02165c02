#ifndef LRT_TENSOR_HPP
#define LRT_TENSOR_HPP

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "lrt/errors.hpp"

namespace lrt {

using count = std::size_t;

/// Row-major dense matrix of 64-bit reals. Row-major layout is fixed so the
/// snapshot format is unambiguous.
class DenseMatrix {
  public:
    DenseMatrix() = default;
    DenseMatrix(count rows, count cols)
        : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    DenseMatrix(count rows, count cols, std::vector<double> data);

    count rows() const { return rows_; }
    count cols() const { return cols_; }
    count size() const { return data_.size(); }

    double& at(count r, count c) { return data_[r * cols_ + c]; }
    double at(count r, count c) const { return data_[r * cols_ + c]; }
    double& operator()(count r, count c) { return at(r, c); }
    double operator()(count r, count c) const { return at(r, c); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    bool all_finite() const;
    /// Throws InvalidInput when any entry is NaN or Inf.
    void require_finite(const std::string& what) const;

  private:
    count rows_ = 0;
    count cols_ = 0;
    std::vector<double> data_;
};

/// 4-D convolution kernel with `out_channels` filters over `in_channels`
/// input channels and square k x k taps. Layout (out, in, k, k), row-major.
struct ConvKernel {
    count out_channels = 0; // n
    count in_channels = 0;  // m
    count kernel = 0;       // k
    std::vector<double> data;

    ConvKernel() = default;
    ConvKernel(count out_c, count in_c, count k);

    count size() const { return out_channels * in_channels * kernel * kernel; }
    double& at(count o, count i, count r, count c) {
        return data[((o * in_channels + i) * kernel + r) * kernel + c];
    }
    double at(count o, count i, count r, count c) const {
        return data[((o * in_channels + i) * kernel + r) * kernel + c];
    }
};

/// Counts matrix products executed on this thread; tests use it to pin the
/// shared-term arithmetic in the decay gradients.
struct MatmulCounter {
    static void reset();
    static std::uint64_t value();
};

/// C = A * B with 64-bit accumulation. Throws ShapeError on inner mismatch.
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);

/// C += A * B into an existing matrix (shape-checked).
void matmul_into(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& c);

DenseMatrix transpose(const DenseMatrix& a);

double frobenius_norm(const DenseMatrix& a);
double frobenius_norm(const std::vector<double>& v);

} // namespace lrt

#endif
