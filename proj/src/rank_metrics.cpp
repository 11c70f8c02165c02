#include "lrt/rank_metrics.hpp"

#include <algorithm>
#include <cmath>

namespace lrt {

namespace {

void validate_spectrum(std::span<const double> s) {
    if (s.empty()) throw InvalidInput("spectrum is empty");
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (!std::isfinite(s[i]) || s[i] < 0.0) {
            throw InvalidInput("spectrum entries must be finite and >= 0");
        }
        if (i > 0 && s[i] > s[i - 1]) {
            throw InvalidInput("spectrum must be non-increasing");
        }
    }
}

count round_half_up_clamped(double x, count full_rank) {
    double r = std::floor(x + 0.5);
    if (r < 1.0) r = 1.0;
    const double cap = static_cast<double>(full_rank);
    if (r > cap) r = cap;
    return static_cast<count>(r);
}

} // namespace

double stable_rank(std::span<const double> singular) {
    validate_spectrum(singular);
    if (singular.front() == 0.0) {
        throw DegenerateSpectrum("stable rank of an all-zero spectrum");
    }
    double sum_sq = 0.0;
    for (double s : singular) sum_sq += s * s;
    return sum_sq / (singular.front() * singular.front());
}

ScaleFactor scale_factor(std::span<const double> singular_epoch0, count full_rank,
                         const std::string& layer_id) {
    const double sr = stable_rank(singular_epoch0);
    return ScaleFactor{layer_id, static_cast<double>(full_rank) / sr};
}

double scaled_stable_rank(std::span<const double> singular, double xi) {
    if (xi <= 0.0) throw InvalidInput("xi must be > 0");
    const double scaled = xi * stable_rank(singular);
    const double full = static_cast<double>(singular.size());
    // Snap within rounding distance of the cap so that an epoch-0 spectrum
    // scaled by its own xi lands on the full rank exactly: (full / sr) * sr
    // re-rounds and can fall a couple of ulps short of the clamp.
    if (scaled >= full * (1.0 - 16.0 * std::numeric_limits<double>::epsilon())) {
        return full;
    }
    return scaled;
}

count accumulative_rank(std::span<const double> singular, double p) {
    validate_spectrum(singular);
    if (p < 0.0 || p > 1.0) throw InvalidInput("accumulative fraction must be in [0,1]");
    double total = 0.0;
    for (double s : singular) total += s;
    const double target = p * total;
    double partial = 0.0;
    for (std::size_t r = 1; r <= singular.size(); ++r) {
        partial += singular[r - 1];
        if (partial >= target) return r;
    }
    return singular.size();
}

count estimate_rank(std::span<const double> singular, double xi,
                    const RankEstimatorConfig& config) {
    const count full_rank = singular.size();
    switch (config.mode) {
        case RankMode::stable:
            return round_half_up_clamped(stable_rank(singular), full_rank);
        case RankMode::scaled_stable:
            return round_half_up_clamped(scaled_stable_rank(singular, xi), full_rank);
        case RankMode::max_rule: {
            const count scaled =
                round_half_up_clamped(scaled_stable_rank(singular, xi), full_rank);
            const count accum = accumulative_rank(singular, config.accum_fraction);
            return std::min(std::max(scaled, accum), full_rank);
        }
    }
    throw InvalidInput("unknown rank estimation mode");
}

count unrolled_full_rank(const ConvKernel& kernel) {
    return std::min(kernel.in_channels * kernel.kernel * kernel.kernel,
                    kernel.out_channels);
}

double rank_ratio(count r, count full_rank) {
    if (r < 1 || r > full_rank) throw InvalidInput("rank outside [1, full rank]");
    return static_cast<double>(r) / static_cast<double>(full_rank);
}

const char* rank_mode_name(RankMode mode) {
    switch (mode) {
        case RankMode::stable: return "stable";
        case RankMode::scaled_stable: return "scaled_stable";
        case RankMode::max_rule: return "max_rule";
    }
    return "scaled_stable";
}

RankMode rank_mode_from_name(const std::string& name) {
    if (name == "stable") return RankMode::stable;
    if (name == "scaled_stable") return RankMode::scaled_stable;
    if (name == "max_rule") return RankMode::max_rule;
    throw InvalidInput("unknown rank estimator mode: " + name);
}

} // namespace lrt
