#pragma once

// kNN forecast-error slope (largest-Lyapunov-exponent proxy) over ensembles of
// log-step-norm micro-series, and the trailing-mean smoother.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "relscan/error.hpp"
#include "relscan/random.hpp"
#include "relscan/solver.hpp"

namespace relscan {

/// y_k = log(step_norm_k). Stored 0-based; position p (1-based) is values[p - 1].
struct MicroSeries {
    std::vector<double> values;
    std::optional<std::size_t> frozen_from;
};

inline MicroSeries micro_series(const Trajectory& traj, const StabilizationConfig& stab) {
    MicroSeries out;
    out.frozen_from = traj.frozen_from;
    out.values.reserve(traj.step_norms.size());
    for (std::size_t k = 0; k < traj.step_norms.size(); ++k) {
        if (traj.frozen_from && k >= *traj.frozen_from) {
            out.values.push_back(stab.tail_floor_log);
        } else {
            out.values.push_back(std::max(std::log(traj.step_norms[k]), stab.tail_floor_log));
        }
    }
    return out;
}

struct EmbeddingConfig {
    std::size_t lookback = 5;
    std::size_t h_min = 1;
    std::size_t h_max = 5;
    std::size_t k_neighbors = 3;
    double internal_train_fraction = 0.60;
    double error_floor = 1e-12;

    void validate() const {
        if (lookback < 1) throw ConfigError("lookback L must be >= 1");
        if (h_min < 1 || h_max < h_min) throw ConfigError("require 1 <= h_min <= h_max");
        if (k_neighbors < 1) throw ConfigError("k_neighbors must be >= 1");
        if (!(internal_train_fraction > 0.0 && internal_train_fraction < 1.0)) {
            throw ConfigError("internal_train_fraction must lie in (0, 1)");
        }
        if (!(error_floor > 0.0)) throw ConfigError("error_floor must be positive");
    }

    /// Profile length for K-iteration micro-series.
    std::size_t profile_length(std::size_t iterations) const {
        if (iterations < lookback + h_max) return 0;
        return iterations - h_max - lookback + 1;
    }
};

/// Ordinary least-squares slope of ys against xs.
inline double ls_slope(std::span<const double> xs, std::span<const double> ys) {
    const auto n = static_cast<double>(xs.size());
    if (xs.size() < 2) return 0.0;
    const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
    const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    return sxx > 0.0 ? sxy / sxx : 0.0;
}

/// Slope of log(max(e(h), floor)) against h for h = h_min, h_min + 1, ...
inline double forecast_error_slope(std::span<const double> errors, std::size_t h_min, double error_floor) {
    std::vector<double> hs(errors.size());
    std::vector<double> logs(errors.size());
    for (std::size_t i = 0; i < errors.size(); ++i) {
        hs[i] = static_cast<double>(h_min + i);
        logs[i] = std::log(std::max(errors[i], error_floor));
    }
    return ls_slope(hs, logs);
}

/// Per-horizon kNN forecast RMSE at window end t_end (1-based series position).
/// Runs are split by shuffled run index; the first ceil(fraction * n) train.
template <class Rng>
std::vector<double> knn_forecast_errors(std::span<const MicroSeries> ensemble, std::size_t t_end,
                                        const EmbeddingConfig& cfg, Rng& rng) {
    const std::size_t n = ensemble.size();
    if (n < 2) throw ConfigError("ensemble must contain at least two runs");
    if (t_end < cfg.lookback) throw ConfigError("t_end must be >= L");
    for (const MicroSeries& s : ensemble) {
        if (t_end + cfg.h_max > s.values.size()) throw ConfigError("t_end + h_max exceeds the micro-series length");
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    fisher_yates(std::span<std::size_t>(order), rng);
    const auto n_train = std::min(n, static_cast<std::size_t>(std::ceil(cfg.internal_train_fraction * static_cast<double>(n))));
    if (n_train >= n) throw ConfigError("internal split leaves no test runs");
    std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
    std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
    std::sort(train.begin(), train.end());
    const std::size_t k = std::min(cfg.k_neighbors, train.size());

    const std::size_t L = cfg.lookback;
    const std::size_t first = t_end - L; // 0-based index of y_{t_end - L + 1}
    auto value = [&](std::size_t run, std::size_t position) { return ensemble[run].values[position - 1]; };

    const std::size_t n_h = cfg.h_max - cfg.h_min + 1;
    std::vector<double> sq_err(n_h, 0.0);
    std::vector<std::pair<double, std::size_t>> dist(train.size());
    for (std::size_t q : test) {
        const auto& yq = ensemble[q].values;
        for (std::size_t a = 0; a < train.size(); ++a) {
            const auto& yt = ensemble[train[a]].values;
            double d2 = 0.0;
            for (std::size_t m = 0; m < L; ++m) {
                const double d = yq[first + m] - yt[first + m];
                d2 += d * d;
            }
            dist[a] = {d2, train[a]};
        }
        std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
        for (std::size_t hi = 0; hi < n_h; ++hi) {
            const std::size_t pos = t_end + cfg.h_min + hi;
            double pred = 0.0;
            for (std::size_t a = 0; a < k; ++a) pred += value(dist[a].second, pos);
            pred /= static_cast<double>(k);
            const double e = value(q, pos) - pred;
            sq_err[hi] += e * e;
        }
    }
    for (double& s : sq_err) s = std::sqrt(s / static_cast<double>(test.size()));
    return sq_err;
}

/// LLE proxy at window end t_end.
template <class Rng>
double lle_proxy_at(std::span<const MicroSeries> ensemble, std::size_t t_end, const EmbeddingConfig& cfg, Rng& rng) {
    const auto errors = knn_forecast_errors(ensemble, t_end, cfg, rng);
    return forecast_error_slope(errors, cfg.h_min, cfg.error_floor);
}

inline std::vector<double> smooth_profile(std::span<const double> raw, std::size_t window) {
    if (window < 1) throw ConfigError("smoothing window must be >= 1");
    std::vector<double> out(raw.size());
    for (std::size_t j = 0; j < raw.size(); ++j) {
        const std::size_t lo = (j + 1 >= window) ? j + 1 - window : 0;
        double s = 0.0;
        for (std::size_t m = lo; m <= j; ++m) s += raw[m];
        out[j] = s / static_cast<double>(j - lo + 1);
    }
    return out;
}

/// Raw and smoothed proxy profiles. Index j (0-based) maps to t_end = L + j.
struct ProxyProfile {
    std::vector<double> raw;
    std::vector<double> smoothed;
    std::size_t lookback = 5;
    std::size_t smooth_window = 4;

    std::size_t size() const noexcept { return raw.size(); }
    std::size_t t_end_of(std::size_t j) const noexcept { return lookback + j; }
    /// Inverse of t_end_of; returns nullopt outside the profile.
    std::optional<std::size_t> index_of(std::size_t t_end) const noexcept {
        if (t_end < lookback || t_end - lookback >= raw.size()) return std::nullopt;
        return t_end - lookback;
    }
};

inline std::uint64_t profile_seed(std::uint64_t grid_seed, std::size_t t_end) noexcept {
    return derive_seed(grid_seed ^ 0xA5A5A5A5A5A5A5A5ULL, t_end);
}

/// Raw profile over every admissible window end; `smoothed` is left empty.
inline ProxyProfile proxy_profile(std::span<const MicroSeries> ensemble, const EmbeddingConfig& cfg,
                                  std::size_t iterations, std::uint64_t grid_seed) {
    if (ensemble.empty()) throw ConfigError("ensemble must be nonempty");
    if (iterations < cfg.lookback + cfg.h_max) {
        throw ConfigError("K too small: need K >= L + h_max");
    }
    for (const MicroSeries& s : ensemble) {
        if (s.values.size() < iterations) throw ConfigError("micro-series shorter than K");
    }
    ProxyProfile profile;
    profile.lookback = cfg.lookback;
    const std::size_t width = cfg.profile_length(iterations);
    profile.raw.resize(width);
    for (std::size_t j = 0; j < width; ++j) {
        const std::size_t t_end = cfg.lookback + j;
        SplitMix64 rng(profile_seed(grid_seed, t_end));
        profile.raw[j] = lle_proxy_at(ensemble, t_end, cfg, rng);
    }
    return profile;
}

inline void apply_smoothing(ProxyProfile& profile, std::size_t window) {
    profile.smooth_window = window;
    profile.smoothed = smooth_profile(profile.raw, window);
}

} // namespace relscan
