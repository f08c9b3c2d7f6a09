#pragma once

// Reliability scores from the smoothed proxy profile, good-subset selection,
// timing statistics and the diagnostic cost model.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "relscan/error.hpp"
#include "relscan/profiler.hpp"
#include "relscan/random.hpp"

namespace relscan {

/// Evaluation window in solver-iteration (t_end) units.
struct MetricWindow {
    std::size_t t_start = 10;
    std::size_t t_stop = 200;
    double epsilon = 1e-8;

    /// t_start = max(base, L + h_max).
    static MetricWindow for_embedding(const EmbeddingConfig& cfg, std::size_t base_start = 10, std::size_t t_stop = 200,
                                      double epsilon = 1e-8) {
        return MetricWindow{std::max(base_start, cfg.lookback + cfg.h_max), t_stop, epsilon};
    }
};

struct ProfileMetrics {
    std::size_t t_min = 0;
    double y_min = 0.0;
    double s_min = 0.0;
    double m0 = 0.0;
    double t_bar = 0.0;
    double s_mom = 0.0;
    std::optional<std::size_t> t_enter_neg;
};

inline ProfileMetrics compute_metrics(const ProxyProfile& profile, const MetricWindow& window) {
    if (profile.smoothed.size() != profile.raw.size()) throw ConfigError("profile has no smoothed values");
    if (profile.smoothed.empty()) throw ConfigError("empty profile");
    const std::size_t first_t = profile.t_end_of(0);
    const std::size_t last_t = profile.t_end_of(profile.size() - 1);
    const std::size_t lo = std::max(window.t_start, first_t);
    const std::size_t hi = std::min(window.t_stop, last_t);
    if (lo > hi) throw ConfigError("metric window does not overlap the profile");

    ProfileMetrics m;
    m.t_min = lo;
    m.y_min = profile.smoothed[*profile.index_of(lo)];
    double weighted = 0.0;
    for (std::size_t t = lo; t <= hi; ++t) {
        const double v = profile.smoothed[*profile.index_of(t)];
        if (v < m.y_min) {
            m.y_min = v;
            m.t_min = t;
        }
        const double neg = std::max(0.0, -v);
        m.m0 += neg;
        weighted += static_cast<double>(t) * neg;
        if (!m.t_enter_neg && v < 0.0) m.t_enter_neg = t;
    }
    m.s_min = -m.y_min / (static_cast<double>(m.t_min) + window.epsilon);
    if (m.m0 > 0.0) {
        m.t_bar = weighted / (m.m0 + window.epsilon);
        m.s_mom = m.m0 / (m.t_bar + window.epsilon);
    }
    return m;
}

struct GoodSubset {
    double threshold = 0.0;
    std::size_t selected_count = 0;
    std::vector<bool> mask;
};

/// Top round(fraction * n) scores; ties at the threshold go to lower indices.
inline GoodSubset good_subset_threshold(std::span<const double> scores, double fraction) {
    if (scores.empty()) throw ConfigError("scores must be nonempty");
    if (!(fraction > 0.0 && fraction < 1.0)) throw ConfigError("fraction must lie in (0, 1)");
    const std::size_t n = scores.size();
    const std::size_t count = std::min(n, round_half_up(fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    GoodSubset out;
    out.selected_count = count;
    out.mask.assign(n, false);
    for (std::size_t r = 0; r < count; ++r) out.mask[order[r]] = true;
    out.threshold = count > 0 ? scores[order[count - 1]] : scores[order[0]];
    return out;
}

struct HistogramBin {
    std::size_t bin_left = 0;
    std::size_t count_good = 0;
    std::size_t count_rest = 0;
};

/// Maps a t_min iteration index to a profile index.
enum class ProfileIndexOrigin {
    lookback,     // T = t - L + 1, consistent with k_req(T) = T + L + h_max - 1
    warmup,       // T = t - (L + h_max - 1)
};

inline std::size_t profile_index_for(std::size_t t, std::size_t lookback, std::size_t h_max, ProfileIndexOrigin origin) {
    const std::size_t offset = origin == ProfileIndexOrigin::lookback ? lookback - 1 : lookback + h_max - 1;
    return t > offset ? t - offset : 1;
}

struct TimingSummary {
    std::vector<HistogramBin> t_min_hist;
    std::vector<HistogramBin> t_enter_neg_hist;
    double median_t_min_good = 0.0;
    std::size_t T_min = 0;
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw ConfigError("median of empty sequence");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace detail {

inline std::vector<HistogramBin> bin_counts(const std::vector<std::pair<std::size_t, bool>>& values, std::size_t width) {
    if (values.empty()) return {};
    std::size_t lo = values.front().first;
    std::size_t hi = lo;
    for (const auto& [v, good] : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    lo = lo / width * width;
    std::vector<HistogramBin> bins;
    for (std::size_t left = lo; left <= hi; left += width) bins.push_back({left, 0, 0});
    for (const auto& [v, good] : values) {
        auto& b = bins[(v - lo) / width];
        (good ? b.count_good : b.count_rest) += 1;
    }
    return bins;
}

} // namespace detail

inline TimingSummary timing_summary(std::span<const ProfileMetrics> metrics, const std::vector<bool>& good_mask,
                                    std::size_t lookback, std::size_t h_max, std::size_t bin_width = 5,
                                    ProfileIndexOrigin origin = ProfileIndexOrigin::lookback) {
    if (metrics.size() != good_mask.size()) throw ConfigError("good mask does not align with metrics");
    if (bin_width < 1) throw ConfigError("histogram bin width must be >= 1");
    std::vector<double> good_t_min;
    std::vector<std::pair<std::size_t, bool>> tmin_values;
    std::vector<std::pair<std::size_t, bool>> enter_values;
    for (std::size_t p = 0; p < metrics.size(); ++p) {
        tmin_values.emplace_back(metrics[p].t_min, good_mask[p]);
        if (metrics[p].t_enter_neg) enter_values.emplace_back(*metrics[p].t_enter_neg, good_mask[p]);
        if (good_mask[p]) good_t_min.push_back(static_cast<double>(metrics[p].t_min));
    }
    if (good_t_min.empty()) throw ConfigError("good subset is empty");
    TimingSummary out;
    out.t_min_hist = detail::bin_counts(tmin_values, bin_width);
    out.t_enter_neg_hist = detail::bin_counts(enter_values, bin_width);
    out.median_t_min_good = median(good_t_min);
    out.T_min = profile_index_for(static_cast<std::size_t>(std::llround(out.median_t_min_good)), lookback, h_max, origin);
    return out;
}

struct CostEstimate {
    std::size_t horizon = 0;
    std::size_t k_req = 0;
    double speedup = 0.0;
};

inline CostEstimate required_iterations(std::size_t horizon, std::size_t lookback, std::size_t h_max, std::size_t iterations) {
    if (horizon < 1) throw ConfigError("horizon T must be >= 1");
    CostEstimate c;
    c.horizon = horizon;
    c.k_req = horizon + lookback + h_max - 1;
    c.speedup = static_cast<double>(iterations) / static_cast<double>(c.k_req);
    return c;
}

} // namespace relscan
