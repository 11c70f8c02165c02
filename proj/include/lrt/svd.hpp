#ifndef LRT_SVD_HPP
#define LRT_SVD_HPP

#include <vector>

#include "lrt/tensor.hpp"

namespace lrt {

/// Thin singular value decomposition A = left * diag(singular) * right_t.
///
/// - `singular` holds min(rows, cols) values, non-increasing, >= 0; values
///   below 1e-12 * sigma_max are clamped to zero to stabilize downstream
///   rank ratios.
/// - `left` has orthonormal columns (rows x rank), `right_t` orthonormal
///   rows (rank x cols).
struct SvdResult {
    DenseMatrix left;
    std::vector<double> singular;
    DenseMatrix right_t;
};

/// Full decomposition via one-sided Jacobi rotations (cyclic sweeps applied
/// to column pairs until the largest normalized off-diagonal dot product
/// falls below 1e-12, capped at 10 000 sweeps).
///
/// Throws InvalidInput for empty or non-finite input, NumericalFailure if
/// the sweep cap is reached without convergence.
SvdResult svd(const DenseMatrix& a);

/// Singular values only; skips accumulating the singular vectors but runs
/// the same rotation sequence, so the values match svd() exactly.
std::vector<double> singular_values(const DenseMatrix& a);

} // namespace lrt

#endif
