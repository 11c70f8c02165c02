#ifndef LRT_RANK_METRICS_HPP
#define LRT_RANK_METRICS_HPP

#include <span>
#include <string>
#include <vector>

#include "lrt/tensor.hpp"

namespace lrt {

/// Per-layer calibration constant: full rank over the stable rank of the
/// randomly initialized weights, computed once at epoch 0 and immutable.
/// A fresh random layer then scores exactly full rank after scaling.
struct ScaleFactor {
    std::string layer_id;
    double xi = 1.0; // > 0; >= 1 is typical but not guaranteed
};

enum class RankMode { stable, scaled_stable, max_rule };

struct RankEstimatorConfig {
    RankMode mode = RankMode::scaled_stable;
    /// Fraction of singular-value mass the accumulative rank must cover
    /// (used by max_rule only). 0.8 keeps 80% of the spectrum mass.
    double accum_fraction = 0.8;
};

/// stable rank = (sum_i sigma_i^2) / sigma_max^2. Smooth proxy for rank,
/// insensitive to tiny singular values; always in [1, #nonzero].
/// Throws DegenerateSpectrum when the spectrum is all zero.
double stable_rank(std::span<const double> singular);

/// xi = full_rank / stable_rank(epoch-0 spectrum).
ScaleFactor scale_factor(std::span<const double> singular_epoch0, count full_rank,
                         const std::string& layer_id = "");

/// xi * stable_rank, clamped above by the full rank (= spectrum length);
/// mid-training estimates can otherwise exceed it.
double scaled_stable_rank(std::span<const double> singular, double xi);

/// Smallest r >= 1 with sum_{i<=r} sigma_i >= p * sum_j sigma_j.
count accumulative_rank(std::span<const double> singular, double p);

/// Integer rank for factorization: round-half-up of the configured metric,
/// max_rule takes max(scaled estimate, accumulative rank), always clamped
/// to [1, full rank].
count estimate_rank(std::span<const double> singular, double xi,
                    const RankEstimatorConfig& config);

/// Rank of the unrolled conv matrix: min(m*k^2, n).
count unrolled_full_rank(const ConvKernel& kernel);

double rank_ratio(count r, count full_rank);

const char* rank_mode_name(RankMode mode);
RankMode rank_mode_from_name(const std::string& name);

} // namespace lrt

#endif
