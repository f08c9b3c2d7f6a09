#pragma once

// Multi-horizon prefix datasets and train/test split manifests.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "relscan/error.hpp"
#include "relscan/random.hpp"
#include "relscan/solver.hpp"

namespace relscan {

/// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    std::span<const double> data() const noexcept { return data_; }

    /// Rows picked by index, in the given order.
    Matrix select_rows(std::span<const std::size_t> idx) const {
        Matrix out(idx.size(), cols_);
        for (std::size_t r = 0; r < idx.size(); ++r) std::copy_n(row(idx[r]).begin(), cols_, out.row(r).begin());
        return out;
    }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

struct HorizonDataset {
    std::size_t horizon = 0;
    Matrix features;
    std::vector<double> targets;
    std::vector<std::size_t> point_ids;
};

/// Rows follow the order of `point_ids`, which callers keep in row-major (i, j) order.
inline HorizonDataset build_horizon_dataset(std::span<const std::vector<double>> raw_profiles,
                                            std::span<const double> targets, std::span<const std::size_t> point_ids,
                                            std::size_t horizon) {
    if (raw_profiles.size() != targets.size() || raw_profiles.size() != point_ids.size()) {
        throw ConfigError("profiles, targets and ids must align");
    }
    if (horizon < 1) throw ConfigError("horizon T must be >= 1");
    HorizonDataset ds;
    ds.horizon = horizon;
    ds.features = Matrix(raw_profiles.size(), horizon);
    for (std::size_t p = 0; p < raw_profiles.size(); ++p) {
        if (raw_profiles[p].size() < horizon) {
            throw ConfigError("horizon T=" + std::to_string(horizon) + " exceeds profile length " +
                              std::to_string(raw_profiles[p].size()) + " at point " + std::to_string(point_ids[p]));
        }
        std::copy_n(raw_profiles[p].begin(), horizon, ds.features.row(p).begin());
    }
    ds.targets.assign(targets.begin(), targets.end());
    ds.point_ids.assign(point_ids.begin(), point_ids.end());
    return ds;
}

enum class SplitKind { random, center };

inline std::string_view to_string(SplitKind k) { return k == SplitKind::random ? "random" : "center"; }

inline SplitKind parse_split_kind(std::string_view s) {
    if (s == "random") return SplitKind::random;
    if (s == "center") return SplitKind::center;
    throw ConfigError("unknown split kind: " + std::string(s));
}

struct SplitManifest {
    SplitKind kind = SplitKind::random;
    double fraction = 0.0;       // test fraction (random) or train fraction (center)
    std::uint64_t seed = 0;
    std::vector<std::size_t> train_ids;
    std::vector<std::size_t> test_ids;

    bool operator==(const SplitManifest&) const = default;
};

/// Fisher-Yates over ids 0..n-1; the last round(test_fraction * n) are test.
inline SplitManifest random_split(std::size_t n, double test_fraction, std::uint64_t seed) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    SplitMix64 rng(seed);
    fisher_yates(std::span<std::size_t>(ids), rng);
    const std::size_t n_test = std::min(n, round_half_up(test_fraction * static_cast<double>(n)));
    SplitManifest m;
    m.kind = SplitKind::random;
    m.fraction = test_fraction;
    m.seed = seed;
    m.train_ids.assign(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(n_test));
    m.test_ids.assign(ids.end() - static_cast<std::ptrdiff_t>(n_test), ids.end());
    std::sort(m.train_ids.begin(), m.train_ids.end());
    std::sort(m.test_ids.begin(), m.test_ids.end());
    return m;
}

/// Range-normalized squared distance of grid point `id` to the grid center.
inline double center_distance(const ParamGrid& grid, std::size_t id) {
    const GridPoint p = grid.point(id, 0);
    const double ac = 0.5 * (grid.alpha_min + grid.alpha_max);
    const double bc = 0.5 * (grid.beta_min + grid.beta_max);
    const double ar = grid.alpha_max - grid.alpha_min;
    const double br = grid.beta_max - grid.beta_min;
    const double da = ar > 0.0 ? (p.alpha - ac) / ar : 0.0;
    const double db = br > 0.0 ? (p.beta - bc) / br : 0.0;
    return da * da + db * db;
}

/// Most central round(train_fraction * n) points train; ties ordered by (i, j).
inline SplitManifest center_split(const ParamGrid& grid, double train_fraction) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
    const std::size_t n = grid.size();
    std::vector<std::size_t> ids(n);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    std::vector<double> d(n);
    for (std::size_t p = 0; p < n; ++p) d[p] = center_distance(grid, p);
    // Row-major ids already encode the (i, j) tie order.
    std::stable_sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) { return d[a] < d[b]; });
    const std::size_t n_train = std::min(n, round_half_up(train_fraction * static_cast<double>(n)));
    SplitManifest m;
    m.kind = SplitKind::center;
    m.fraction = train_fraction;
    m.train_ids.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
    m.test_ids.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
    std::sort(m.train_ids.begin(), m.train_ids.end());
    std::sort(m.test_ids.begin(), m.test_ids.end());
    return m;
}

struct HorizonSchedule {
    std::size_t start = 1;
    std::size_t step = 2;
    std::size_t max_T = 35;
};

inline std::vector<std::size_t> horizon_list(const HorizonSchedule& schedule, std::size_t profile_length) {
    if (profile_length < 1) throw ConfigError("profile length must be >= 1");
    if (schedule.start < 1 || schedule.step < 1) throw ConfigError("horizon schedule needs start >= 1 and step >= 1");
    const std::size_t cap = std::min(schedule.max_T, profile_length);
    std::vector<std::size_t> out;
    for (std::size_t T = schedule.start; T <= cap; T += schedule.step) out.push_back(T);
    return out;
}

} // namespace relscan
