#include "lrt/rank_trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace lrt {

void RankTrajectory::append(count epoch, double stable_rank) {
    const count expected = values_.empty() ? 0 : values_.back().first + 1;
    if (epoch != expected) {
        throw SequenceError("trajectory " + layer_id_ + ": epoch " +
                            std::to_string(epoch) + " after epoch " +
                            (values_.empty() ? std::string("none")
                                             : std::to_string(values_.back().first)));
    }
    values_.emplace_back(epoch, stable_rank);
}

double derivative(const RankTrajectory& trajectory, count window) {
    if (window < 1) throw InvalidInput("derivative window must be >= 1");
    const auto& v = trajectory.values();
    if (v.size() < window + 1) {
        throw NotEnoughData("trajectory " + trajectory.layer_id() + " has " +
                            std::to_string(v.size()) + " entries, needs " +
                            std::to_string(window + 1));
    }
    double sum = 0.0;
    for (count i = v.size() - window; i < v.size(); ++i) {
        sum += std::abs(v[i].second - v[i - 1].second);
    }
    return sum / static_cast<double>(window);
}

bool all_stabilized(std::span<const RankTrajectory> trajectories,
                    const StabilizationConfig& config) {
    for (const auto& t : trajectories) {
        if (t.length() < config.min_epochs) {
            throw NotEnoughData("trajectory " + t.layer_id() + " has " +
                                std::to_string(t.length()) + " entries, min_epochs " +
                                std::to_string(config.min_epochs));
        }
        if (derivative(t, config.window) > config.epsilon) return false;
    }
    return true;
}

std::optional<count> SwitchDetector::observe(
    std::span<const RankTrajectory> trajectories) {
    if (detected_) return detected_;
    if (trajectories.empty()) return std::nullopt;
    bool stabilized = false;
    try {
        stabilized = all_stabilized(trajectories, config_);
    } catch (const NotEnoughData&) {
        return std::nullopt;
    }
    if (stabilized) {
        detected_ = trajectories.front().values().back().first + 1;
    }
    return detected_;
}

void write_trajectory_csv(std::ostream& out,
                          std::span<const RankTrajectory> trajectories) {
    out << "epoch,layer,stable_rank,scaled_stable_rank,rank_ratio\n";
    count max_len = 0;
    for (const auto& t : trajectories) max_len = std::max(max_len, t.length());
    char buf[128];
    for (count e = 0; e < max_len; ++e) {
        for (const auto& t : trajectories) {
            if (e >= t.length()) continue;
            const double sr = t.values()[e].second;
            const double scaled =
                std::min(t.xi() * sr, static_cast<double>(t.full_rank()));
            const double ratio = scaled / static_cast<double>(t.full_rank());
            std::snprintf(buf, sizeof(buf), "%zu,%s,%.12g,%.12g,%.12g\n",
                          static_cast<std::size_t>(t.values()[e].first),
                          t.layer_id().c_str(), sr, scaled, ratio);
            out << buf;
        }
    }
}

} // namespace lrt
