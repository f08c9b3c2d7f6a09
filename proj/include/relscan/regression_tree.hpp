#pragma once

// CART regression tree with variance-reduction splits; the building block of
// the random forest and gradient boosting regressors.

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "relscan/dataset.hpp"
#include "relscan/random.hpp"

namespace relscan {

struct TreeParams {
    std::size_t max_depth = 12;
    std::size_t min_leaf = 1;
    /// Features examined per split; 0 means all.
    std::size_t features_per_split = 0;
};

class RegressionTree {
public:
    struct Node {
        int feature = -1;          // -1 marks a leaf
        double threshold = 0.0;    // go left when x[feature] <= threshold
        std::int32_t left = -1;
        std::int32_t right = -1;
        double value = 0.0;

        bool operator==(const Node&) const = default;
    };

    RegressionTree() = default;

    /// Fits on the rows listed in `sample` (duplicates allowed, as in bootstrap).
    template <class Rng>
    void fit(const Matrix& x, std::span<const double> y, std::vector<std::size_t> sample, const TreeParams& params,
             Rng& rng) {
        nodes_.clear();
        n_features_ = x.cols();
        build(x, y, sample, 0, params, rng);
    }

    void fit(const Matrix& x, std::span<const double> y, const TreeParams& params) {
        std::vector<std::size_t> sample(x.rows());
        std::iota(sample.begin(), sample.end(), std::size_t{0});
        SplitMix64 unused(0);
        fit(x, y, std::move(sample), params, unused);
    }

    double predict(std::span<const double> row) const noexcept {
        std::int32_t at = 0;
        while (nodes_[static_cast<std::size_t>(at)].feature >= 0) {
            const Node& n = nodes_[static_cast<std::size_t>(at)];
            at = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        return nodes_[static_cast<std::size_t>(at)].value;
    }

    std::span<const Node> nodes() const noexcept { return nodes_; }
    std::size_t depth() const noexcept { return depth_of(0); }

    bool operator==(const RegressionTree&) const = default;

private:
    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double gain = 0.0;
    };

    std::size_t depth_of(std::size_t at) const noexcept {
        const Node& n = nodes_[at];
        if (n.feature < 0) return 0;
        return 1 + std::max(depth_of(static_cast<std::size_t>(n.left)), depth_of(static_cast<std::size_t>(n.right)));
    }

    // Between-group sum of squares n_l n_r / n (mean_l - mean_r)^2 equals the
    // SSE reduction of the split and avoids cancellation.
    static Split best_split_on(const Matrix& x, std::span<const double> y, std::vector<std::size_t>& sample, int feature,
                               std::size_t min_leaf) {
        const auto f = static_cast<std::size_t>(feature);
        std::stable_sort(sample.begin(), sample.end(), [&](std::size_t a, std::size_t b) { return x(a, f) < x(b, f); });
        const std::size_t n = sample.size();
        double total = 0.0;
        for (std::size_t s : sample) total += y[s];
        Split best;
        double left_sum = 0.0;
        for (std::size_t i = 1; i < n; ++i) {
            left_sum += y[sample[i - 1]];
            const double lo = x(sample[i - 1], f);
            const double hi = x(sample[i], f);
            if (i < min_leaf || n - i < min_leaf || !(lo < hi)) continue;
            const auto nl = static_cast<double>(i);
            const auto nr = static_cast<double>(n - i);
            const double diff = left_sum / nl - (total - left_sum) / nr;
            const double gain = nl * nr / static_cast<double>(n) * diff * diff;
            if (gain > best.gain) {
                double mid = 0.5 * (lo + hi);
                if (!(mid < hi)) mid = lo;
                best = {feature, mid, gain};
            }
        }
        return best;
    }

    template <class Rng>
    std::int32_t build(const Matrix& x, std::span<const double> y, std::vector<std::size_t>& sample, std::size_t depth,
                       const TreeParams& params, Rng& rng) {
        const auto at = static_cast<std::int32_t>(nodes_.size());
        nodes_.push_back(Node{});
        double sum = 0.0;
        double lo = y[sample.front()];
        double hi = lo;
        for (std::size_t s : sample) {
            sum += y[s];
            lo = std::min(lo, y[s]);
            hi = std::max(hi, y[s]);
        }
        nodes_[static_cast<std::size_t>(at)].value = sum / static_cast<double>(sample.size());
        if (depth >= params.max_depth || sample.size() < 2 * std::max<std::size_t>(params.min_leaf, 1) || lo == hi) {
            return at;
        }

        std::vector<int> candidates(n_features_);
        std::iota(candidates.begin(), candidates.end(), 0);
        std::size_t m = params.features_per_split == 0 ? n_features_ : std::min(params.features_per_split, n_features_);
        if (m < n_features_) {
            for (std::size_t k = 0; k < m; ++k) {
                const auto pick = k + static_cast<std::size_t>(uniform_index(rng, n_features_ - k));
                std::swap(candidates[k], candidates[pick]);
            }
            candidates.resize(m);
            std::sort(candidates.begin(), candidates.end());
        }

        Split best;
        for (int f : candidates) {
            const Split s = best_split_on(x, y, sample, f, std::max<std::size_t>(params.min_leaf, 1));
            if (s.gain > best.gain) best = s;
        }
        if (best.feature < 0) return at;

        std::vector<std::size_t> left;
        std::vector<std::size_t> right;
        const auto bf = static_cast<std::size_t>(best.feature);
        for (std::size_t s : sample) (x(s, bf) <= best.threshold ? left : right).push_back(s);
        sample.clear();
        sample.shrink_to_fit();

        const std::int32_t l = build(x, y, left, depth + 1, params, rng);
        const std::int32_t r = build(x, y, right, depth + 1, params, rng);
        Node& node = nodes_[static_cast<std::size_t>(at)];
        node.feature = best.feature;
        node.threshold = best.threshold;
        node.left = l;
        node.right = r;
        return at;
    }

    std::vector<Node> nodes_;
    std::size_t n_features_ = 0;
};

} // namespace relscan
