#include "lrt/svd.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace lrt {

namespace {

constexpr double kOffDiagTol = 1e-12;
constexpr int kMaxSweeps = 10000;
constexpr double kSigmaClamp = 1e-12;

// The sweeps run on G = A^T so that every column of A is a contiguous row;
// dots and rotations then stream through memory.
double row_dot(const DenseMatrix& g, count i, count j) {
    const count m = g.cols();
    const double* a = g.data() + i * m;
    const double* b = g.data() + j * m;
    double s = 0.0;
    for (count k = 0; k < m; ++k) s += a[k] * b[k];
    return s;
}

// Jacobi rotation diagonalizing the 2x2 Gram block [[a, c], [c, b]];
// classic formulas specialized to the one-sided method.
void make_rotation(double a, double b, double c, double& cs, double& sn) {
    const double zeta = (a - b) / (2.0 * std::abs(c));
    const double w = std::sqrt(zeta * zeta + 1.0);
    const double t = zeta > 0.0 ? 1.0 / (zeta + w) : 1.0 / (zeta - w);
    cs = 1.0 / std::sqrt(t * t + 1.0);
    sn = -t * cs * (c < 0.0 ? -1.0 : 1.0);
}

void rotate_rows(DenseMatrix& g, count i, count j, double cs, double sn) {
    const count m = g.cols();
    double* a = g.data() + i * m;
    double* b = g.data() + j * m;
    for (count k = 0; k < m; ++k) {
        const double t1 = a[k];
        const double t2 = b[k];
        a[k] = cs * t1 - sn * t2;
        b[k] = sn * t1 + cs * t2;
    }
}

// One-sided Jacobi on the rows of g; w, when non-null, accumulates the
// right singular vectors as rows (starts as identity). Row squared norms
// are refreshed at each sweep start and updated incrementally after every
// rotation.
void jacobi_sweeps(DenseMatrix& g, DenseMatrix* w) {
    const count n = g.rows();
    if (w) {
        for (count i = 0; i < n; ++i) (*w)(i, i) = 1.0;
    }
    if (n < 2) return;

    std::vector<double> norms(n);
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        for (count i = 0; i < n; ++i) norms[i] = row_dot(g, i, i);
        double max_off = 0.0;
        for (count j = 1; j < n; ++j) {
            for (count i = 0; i < j; ++i) {
                const double a = norms[i];
                const double b = norms[j];
                if (a == 0.0 || b == 0.0) continue;
                const double c = row_dot(g, i, j);
                const double off = std::abs(c) / std::sqrt(a * b);
                max_off = std::max(max_off, off);
                if (off <= kOffDiagTol) continue;
                double cs, sn;
                make_rotation(a, b, c, cs, sn);
                rotate_rows(g, i, j, cs, sn);
                if (w) rotate_rows(*w, i, j, cs, sn);
                const double cross = 2.0 * cs * sn * c;
                norms[i] = cs * cs * a - cross + sn * sn * b;
                norms[j] = sn * sn * a + cross + cs * cs * b;
            }
        }
        if (max_off <= kOffDiagTol) return;
    }
    throw NumericalFailure("svd did not converge within the sweep cap");
}

std::vector<double> row_norms(const DenseMatrix& g) {
    std::vector<double> s(g.rows());
    for (count i = 0; i < g.rows(); ++i) s[i] = std::sqrt(row_dot(g, i, i));
    return s;
}

// Descending sort of sigma with matching row swaps in g and w.
void sort_descending(std::vector<double>& sigma, DenseMatrix* g, DenseMatrix* w) {
    const count n = sigma.size();
    for (count i = 0; i + 1 < n; ++i) {
        count imax = i;
        for (count k = i + 1; k < n; ++k) {
            if (sigma[k] > sigma[imax]) imax = k;
        }
        if (imax == i) continue;
        std::swap(sigma[i], sigma[imax]);
        for (DenseMatrix* m : {g, w}) {
            if (!m) continue;
            double* a = m->data() + i * m->cols();
            double* b = m->data() + imax * m->cols();
            for (count k = 0; k < m->cols(); ++k) std::swap(a[k], b[k]);
        }
    }
}

void clamp_small(std::vector<double>& sigma) {
    if (sigma.empty()) return;
    const double cutoff = kSigmaClamp * sigma.front();
    for (double& s : sigma) {
        if (s < cutoff) s = 0.0;
    }
}

// Left vectors from the rotated rows (columns of the original matrix):
// left(:, j) = row j of g / sigma_j. Zero modes get a deterministic
// orthonormal completion from the standard basis.
DenseMatrix build_left(const DenseMatrix& g, const std::vector<double>& sigma) {
    const count m = g.cols();
    const count n = g.rows();
    DenseMatrix u(m, n);
    std::vector<count> zero_cols;
    for (count j = 0; j < n; ++j) {
        if (sigma[j] > 0.0) {
            const double* row = g.data() + j * m;
            for (count r = 0; r < m; ++r) u(r, j) = row[r] / sigma[j];
        } else {
            zero_cols.push_back(j);
        }
    }
    for (count j : zero_cols) {
        std::vector<double> best(m, 0.0);
        double best_norm2 = -1.0;
        for (count cand = 0; cand < m; ++cand) {
            std::vector<double> vcol(m, 0.0);
            vcol[cand] = 1.0;
            for (count other = 0; other < n; ++other) {
                if (other == j || (sigma[other] == 0.0 && other > j)) continue;
                double dot = 0.0;
                for (count r = 0; r < m; ++r) dot += u(r, other) * vcol[r];
                for (count r = 0; r < m; ++r) vcol[r] -= dot * u(r, other);
            }
            double norm2 = 0.0;
            for (double x : vcol) norm2 += x * x;
            if (norm2 > best_norm2) {
                best_norm2 = norm2;
                best = std::move(vcol);
            }
        }
        const double inv = 1.0 / std::sqrt(best_norm2);
        for (count r = 0; r < m; ++r) u(r, j) = best[r] * inv;
    }
    return u;
}

void validate_input(const DenseMatrix& a) {
    if (a.rows() < 1 || a.cols() < 1) {
        throw InvalidInput("svd: empty matrix");
    }
    a.require_finite("svd input");
}

} // namespace

SvdResult svd(const DenseMatrix& a) {
    validate_input(a);
    const bool wide = a.rows() < a.cols();
    // g rows = columns of the tall orientation of a.
    DenseMatrix g = wide ? a : transpose(a);
    DenseMatrix w(g.rows(), g.rows());
    jacobi_sweeps(g, &w);
    std::vector<double> sigma = row_norms(g);
    sort_descending(sigma, &g, &w);
    clamp_small(sigma);
    DenseMatrix u = build_left(g, sigma);

    SvdResult result;
    result.singular = std::move(sigma);
    if (wide) {
        // Decomposed a^T = u * diag * w, so a = w^T * diag * u^T.
        result.left = transpose(w);
        result.right_t = transpose(u);
    } else {
        result.left = std::move(u);
        result.right_t = std::move(w);
    }
    return result;
}

std::vector<double> singular_values(const DenseMatrix& a) {
    validate_input(a);
    DenseMatrix g = a.rows() < a.cols() ? a : transpose(a);
    jacobi_sweeps(g, nullptr);
    std::vector<double> sigma = row_norms(g);
    sort_descending(sigma, nullptr, nullptr);
    clamp_small(sigma);
    return sigma;
}

} // namespace lrt
