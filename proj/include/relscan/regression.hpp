#pragma once

// The five regression families (kNN, ridge, elastic net, random forest,
// gradient boosting), evaluation metrics and best-by-horizon selection.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "relscan/dataset.hpp"
#include "relscan/error.hpp"
#include "relscan/random.hpp"
#include "relscan/regression_tree.hpp"

namespace relscan {

enum class Family { knn, ridge, elastic_net, random_forest, grad_boost };

inline constexpr std::array<Family, 5> kAllFamilies = {Family::knn, Family::ridge, Family::elastic_net,
                                                       Family::random_forest, Family::grad_boost};

inline std::string_view to_string(Family f) {
    switch (f) {
    case Family::knn: return "knn";
    case Family::ridge: return "ridge";
    case Family::elastic_net: return "elastic_net";
    case Family::random_forest: return "random_forest";
    case Family::grad_boost: return "grad_boost";
    }
    return "unknown";
}

inline Family parse_family(std::string_view s) {
    for (Family f : kAllFamilies)
        if (to_string(f) == s) return f;
    throw ConfigError("unknown model family: " + std::string(s));
}

inline bool is_linear(Family f) noexcept { return f == Family::ridge || f == Family::elastic_net; }

struct KnnParams {
    std::size_t k = 5;
    bool distance_weighted = false;
};

struct RidgeParams {
    double l2 = 1.0;
};

/// Objective: 1/(2n) ||y - Xw - b||^2 + penalty (l1_ratio |w|_1 + (1 - l1_ratio)/2 |w|^2).
struct ElasticNetParams {
    double penalty = 0.001;
    double l1_ratio = 0.5;
    std::size_t max_iter = 1000;
    double tol = 1e-6;
};

struct ForestParams {
    std::size_t trees = 100;
    std::size_t max_depth = 12;
    std::size_t min_leaf = 2;
    double feature_subsample = 1.0 / 3.0;
    bool bootstrap = true;
};

struct BoostParams {
    std::size_t stages = 100;
    std::size_t depth = 3;
    double learning_rate = 0.1;
    double subsample = 1.0;
    std::size_t min_leaf = 1;
};

struct ModelSpec {
    Family family = Family::knn;
    KnnParams knn;
    RidgeParams ridge;
    ElasticNetParams elastic_net;
    ForestParams forest;
    BoostParams boost;
    std::uint64_t seed = 0;

    void validate() const {
        if (knn.k < 1) throw ConfigError("knn.k must be >= 1");
        if (!(ridge.l2 >= 0.0)) throw ConfigError("ridge.l2 must be >= 0");
        if (!(elastic_net.penalty >= 0.0)) throw ConfigError("elastic_net.penalty must be >= 0");
        if (!(elastic_net.l1_ratio >= 0.0 && elastic_net.l1_ratio <= 1.0)) throw ConfigError("elastic_net.l1_ratio must lie in [0, 1]");
        if (elastic_net.max_iter < 1 || !(elastic_net.tol > 0.0)) throw ConfigError("elastic_net needs max_iter >= 1 and tol > 0");
        if (forest.trees < 1 || forest.max_depth < 1 || forest.min_leaf < 1) throw ConfigError("invalid random_forest sizes");
        if (!(forest.feature_subsample > 0.0 && forest.feature_subsample <= 1.0)) throw ConfigError("feature_subsample must lie in (0, 1]");
        if (boost.stages < 1 || boost.depth < 1 || boost.min_leaf < 1) throw ConfigError("invalid grad_boost sizes");
        if (!(boost.learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (!(boost.subsample > 0.0 && boost.subsample <= 1.0)) throw ConfigError("subsample must lie in (0, 1]");
    }
};

inline ModelSpec default_spec(Family f, std::uint64_t seed = 0) {
    ModelSpec s;
    s.family = f;
    s.seed = seed;
    return s;
}

namespace detail {

struct KnnState {
    Matrix x;
    std::vector<double> y;
    KnnParams params;
};

struct LinearState {
    std::vector<double> coef;
    double intercept = 0.0;
    std::size_t iterations = 0;
};

struct ForestState {
    std::vector<RegressionTree> trees;
};

struct BoostState {
    double base = 0.0;
    double learning_rate = 0.1;
    std::vector<RegressionTree> trees;
};

inline std::vector<double> column_means(const Matrix& x) {
    std::vector<double> mean(x.cols(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r)
        for (std::size_t c = 0; c < x.cols(); ++c) mean[c] += x(r, c);
    for (double& m : mean) m /= static_cast<double>(x.rows());
    return mean;
}

inline LinearState fit_ridge(const Matrix& x, std::span<const double> y, const RidgeParams& p) {
    const auto n = static_cast<Eigen::Index>(x.rows());
    const auto d = static_cast<Eigen::Index>(x.cols());
    const auto mean = column_means(x);
    const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    Eigen::MatrixXd xc(n, d);
    Eigen::VectorXd yc(n);
    for (Eigen::Index r = 0; r < n; ++r) {
        for (Eigen::Index c = 0; c < d; ++c) xc(r, c) = x(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) - mean[static_cast<std::size_t>(c)];
        yc(r) = y[static_cast<std::size_t>(r)] - y_mean;
    }
    Eigen::MatrixXd a = xc.transpose() * xc;
    a.diagonal().array() += p.l2;
    const Eigen::VectorXd b = xc.transpose() * yc;
    Eigen::VectorXd w;
    if (p.l2 > 0.0) {
        w = a.ldlt().solve(b);
    } else {
        // Minimum-norm solution when X^T X is singular.
        w = a.completeOrthogonalDecomposition().solve(b);
    }
    LinearState s;
    s.coef.assign(w.data(), w.data() + w.size());
    s.intercept = y_mean;
    for (std::size_t c = 0; c < s.coef.size(); ++c) s.intercept -= mean[c] * s.coef[c];
    return s;
}

inline double soft_threshold(double v, double t) noexcept {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

inline LinearState fit_elastic_net(const Matrix& x, std::span<const double> y, const ElasticNetParams& p) {
    const std::size_t n = x.rows();
    const std::size_t d = x.cols();
    const auto mean = column_means(x);
    const double y_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);

    // Column-major centered copy for the coordinate sweeps.
    std::vector<double> xc(n * d);
    std::vector<double> col_sq(d, 0.0);
    for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t r = 0; r < n; ++r) {
            const double v = x(r, c) - mean[c];
            xc[c * n + r] = v;
            col_sq[c] += v * v;
        }
    }
    std::vector<double> resid(n);
    for (std::size_t r = 0; r < n; ++r) resid[r] = y[r] - y_mean;

    const double nn = static_cast<double>(n);
    const double l1 = nn * p.penalty * p.l1_ratio;
    const double l2 = nn * p.penalty * (1.0 - p.l1_ratio);
    std::vector<double> w(d, 0.0);
    std::size_t iter = 0;
    for (; iter < p.max_iter; ++iter) {
        double max_change = 0.0;
        for (std::size_t c = 0; c < d; ++c) {
            const double denom = col_sq[c] + l2;
            if (denom <= 0.0) continue;
            const double* col = &xc[c * n];
            double rho = 0.0;
            for (std::size_t r = 0; r < n; ++r) rho += col[r] * resid[r];
            rho += col_sq[c] * w[c];
            const double updated = soft_threshold(rho, l1) / denom;
            const double delta = updated - w[c];
            if (delta != 0.0) {
                for (std::size_t r = 0; r < n; ++r) resid[r] -= delta * col[r];
                w[c] = updated;
            }
            max_change = std::max(max_change, std::abs(delta));
        }
        if (max_change < p.tol) {
            ++iter;
            break;
        }
    }
    LinearState s;
    s.coef = std::move(w);
    s.iterations = iter;
    s.intercept = y_mean;
    for (std::size_t c = 0; c < d; ++c) s.intercept -= mean[c] * s.coef[c];
    return s;
}

inline double knn_predict_row(const KnnState& s, std::span<const double> row) {
    const std::size_t n = s.x.rows();
    const std::size_t k = std::min(s.params.k, n);
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t r = 0; r < n; ++r) {
        double d2 = 0.0;
        const auto tr = s.x.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            const double diff = row[c] - tr[c];
            d2 += diff * diff;
        }
        dist[r] = {d2, r};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    if (!s.params.distance_weighted) {
        double acc = 0.0;
        for (std::size_t a = 0; a < k; ++a) acc += s.y[dist[a].second];
        return acc / static_cast<double>(k);
    }
    // Exact matches take all the weight.
    double exact = 0.0;
    std::size_t n_exact = 0;
    for (std::size_t a = 0; a < k; ++a) {
        if (dist[a].first == 0.0) {
            exact += s.y[dist[a].second];
            ++n_exact;
        }
    }
    if (n_exact > 0) return exact / static_cast<double>(n_exact);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
        const double wgt = 1.0 / std::sqrt(dist[a].first);
        num += wgt * s.y[dist[a].second];
        den += wgt;
    }
    return num / den;
}

} // namespace detail

/// Immutable after fit; predict is a pure function of the learned state.
class FittedModel {
public:
    Family family() const noexcept { return family_; }
    std::size_t n_features() const noexcept { return n_features_; }
    double fit_seconds() const noexcept { return fit_seconds_; }

    /// Linear coefficients (ridge and elastic net only).
    std::optional<std::pair<std::vector<double>, double>> linear_coefficients() const {
        if (const auto* s = std::get_if<detail::LinearState>(&state_)) return std::make_pair(s->coef, s->intercept);
        return std::nullopt;
    }

    std::span<const RegressionTree> trees() const noexcept {
        if (const auto* s = std::get_if<detail::ForestState>(&state_)) return s->trees;
        if (const auto* s = std::get_if<detail::BoostState>(&state_)) return s->trees;
        return {};
    }

    double predict_row(std::span<const double> row) const {
        if (row.size() != n_features_) throw ConfigError("feature count does not match the fitted model");
        return std::visit(
            [&](const auto& s) -> double {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, detail::KnnState>) {
                    return detail::knn_predict_row(s, row);
                } else if constexpr (std::is_same_v<S, detail::LinearState>) {
                    double acc = s.intercept;
                    for (std::size_t c = 0; c < row.size(); ++c) acc += s.coef[c] * row[c];
                    return acc;
                } else if constexpr (std::is_same_v<S, detail::ForestState>) {
                    double acc = 0.0;
                    for (const auto& t : s.trees) acc += t.predict(row);
                    return acc / static_cast<double>(s.trees.size());
                } else {
                    double acc = 0.0;
                    for (const auto& t : s.trees) acc += t.predict(row);
                    return s.base + s.learning_rate * acc;
                }
            },
            state_);
    }

    std::vector<double> predict(const Matrix& x) const {
        if (x.cols() != n_features_) throw ConfigError("feature count does not match the fitted model");
        std::vector<double> out(x.rows());
        for (std::size_t r = 0; r < x.rows(); ++r) out[r] = predict_row(x.row(r));
        return out;
    }

private:
    friend FittedModel fit(const ModelSpec&, const Matrix&, std::span<const double>);

    using State = std::variant<detail::KnnState, detail::LinearState, detail::ForestState, detail::BoostState>;

    Family family_ = Family::knn;
    std::size_t n_features_ = 0;
    double fit_seconds_ = 0.0;
    State state_;
};

inline FittedModel fit(const ModelSpec& spec, const Matrix& x, std::span<const double> y) {
    spec.validate();
    if (x.rows() < 2) throw ConfigError("need at least two training rows");
    if (x.rows() != y.size()) throw ConfigError("feature rows and targets differ in length");
    for (double v : x.data())
        if (!std::isfinite(v)) throw ConfigError("non-finite feature value");
    for (double v : y)
        if (!std::isfinite(v)) throw ConfigError("non-finite target value");

    const auto start = std::chrono::steady_clock::now();
    FittedModel model;
    model.family_ = spec.family;
    model.n_features_ = x.cols();
    const std::size_t n = x.rows();

    switch (spec.family) {
    case Family::knn:
        model.state_ = detail::KnnState{x, std::vector<double>(y.begin(), y.end()), spec.knn};
        break;
    case Family::ridge:
        model.state_ = detail::fit_ridge(x, y, spec.ridge);
        break;
    case Family::elastic_net:
        model.state_ = detail::fit_elastic_net(x, y, spec.elastic_net);
        break;
    case Family::random_forest: {
        const ForestParams& p = spec.forest;
        TreeParams tp;
        tp.max_depth = p.max_depth;
        tp.min_leaf = p.min_leaf;
        tp.features_per_split = std::max<std::size_t>(1, static_cast<std::size_t>(p.feature_subsample * static_cast<double>(x.cols())));
        detail::ForestState fs;
        fs.trees.resize(p.trees);
        for (std::size_t t = 0; t < p.trees; ++t) {
            SplitMix64 rng(derive_seed(spec.seed, t));
            std::vector<std::size_t> sample(n);
            if (p.bootstrap) {
                for (auto& s : sample) s = static_cast<std::size_t>(uniform_index(rng, n));
            } else {
                std::iota(sample.begin(), sample.end(), std::size_t{0});
            }
            fs.trees[t].fit(x, y, std::move(sample), tp, rng);
        }
        model.state_ = std::move(fs);
        break;
    }
    case Family::grad_boost: {
        const BoostParams& p = spec.boost;
        detail::BoostState bs;
        bs.base = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
        bs.learning_rate = p.learning_rate;
        TreeParams tp;
        tp.max_depth = p.depth;
        tp.min_leaf = p.min_leaf;
        std::vector<double> current(n, bs.base);
        std::vector<double> resid(n);
        SplitMix64 rng(spec.seed);
        const std::size_t n_sub = std::max<std::size_t>(1, round_half_up(p.subsample * static_cast<double>(n)));
        for (std::size_t stage = 0; stage < p.stages; ++stage) {
            for (std::size_t r = 0; r < n; ++r) resid[r] = y[r] - current[r];
            std::vector<std::size_t> sample(n);
            std::iota(sample.begin(), sample.end(), std::size_t{0});
            if (n_sub < n) {
                fisher_yates(std::span<std::size_t>(sample), rng);
                sample.resize(n_sub);
                std::sort(sample.begin(), sample.end());
            }
            RegressionTree tree;
            tree.fit(x, resid, std::move(sample), tp, rng);
            for (std::size_t r = 0; r < n; ++r) current[r] += p.learning_rate * tree.predict(x.row(r));
            bs.trees.push_back(std::move(tree));
        }
        model.state_ = std::move(bs);
        break;
    }
    }
    model.fit_seconds_ = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return model;
}

inline std::vector<double> predict(const FittedModel& model, const Matrix& x) { return model.predict(x); }

struct Scores {
    double mae = 0.0;
    double rmse = 0.0;
    /// -infinity when undefined (constant truth, imperfect prediction).
    double r2 = 0.0;
};

inline Scores evaluate(std::span<const double> y_true, std::span<const double> y_pred) {
    if (y_true.size() != y_pred.size()) throw ConfigError("y_true and y_pred differ in length");
    if (y_true.empty()) throw ConfigError("cannot evaluate empty predictions");
    const auto n = static_cast<double>(y_true.size());
    const double mean = std::accumulate(y_true.begin(), y_true.end(), 0.0) / n;
    double abs_sum = 0.0;
    double ss_res = 0.0;
    double ss_tot = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double e = y_true[i] - y_pred[i];
        abs_sum += std::abs(e);
        ss_res += e * e;
        ss_tot += (y_true[i] - mean) * (y_true[i] - mean);
    }
    Scores s;
    s.mae = abs_sum / n;
    s.rmse = std::sqrt(ss_res / n);
    if (ss_tot > 0.0) {
        s.r2 = 1.0 - ss_res / ss_tot;
    } else {
        s.r2 = ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    }
    return s;
}

struct EvalRecord {
    SplitKind split = SplitKind::random;
    Family family = Family::knn;
    std::size_t horizon = 0;
    double mae = 0.0;
    double rmse = 0.0;
    double r2 = 0.0;
    double fit_seconds = 0.0;
    double test_seconds = 0.0;
    double test_per_sample_seconds = 0.0;
};

struct TrainResult {
    EvalRecord record;
    std::vector<double> predictions;   // aligned with the test rows
};

/// Fits on the train rows, predicts the test rows, and times both.
inline TrainResult train_and_evaluate(const ModelSpec& spec, SplitKind split, const HorizonDataset& ds,
                                      std::span<const std::size_t> train_rows, std::span<const std::size_t> test_rows) {
    if (test_rows.empty()) throw ConfigError("test set is empty");
    const Matrix x_train = ds.features.select_rows(train_rows);
    std::vector<double> y_train;
    y_train.reserve(train_rows.size());
    for (std::size_t r : train_rows) y_train.push_back(ds.targets[r]);
    const Matrix x_test = ds.features.select_rows(test_rows);
    std::vector<double> y_test;
    y_test.reserve(test_rows.size());
    for (std::size_t r : test_rows) y_test.push_back(ds.targets[r]);

    const FittedModel model = fit(spec, x_train, y_train);
    const auto start = std::chrono::steady_clock::now();
    TrainResult out;
    out.predictions = model.predict(x_test);
    const double test_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const Scores sc = evaluate(y_test, out.predictions);
    out.record = EvalRecord{split, spec.family, ds.horizon, sc.mae, sc.rmse, sc.r2, model.fit_seconds(), test_s,
                            test_s / static_cast<double>(test_rows.size())};
    return out;
}

struct BestRow {
    std::size_t horizon = 0;
    Family family = Family::knn;
    double r2 = 0.0;
    double fit_seconds = 0.0;
    double test_seconds = 0.0;
    double test_per_sample_seconds = 0.0;
};

/// Per horizon, the record with maximal r2; ties go to the earlier family in
/// the fixed order knn, ridge, elastic_net, random_forest, grad_boost.
/// Records must come from a single split.
inline std::vector<BestRow> best_by_horizon(std::span<const EvalRecord> records) {
    std::vector<std::size_t> horizons;
    for (const auto& r : records) horizons.push_back(r.horizon);
    std::sort(horizons.begin(), horizons.end());
    horizons.erase(std::unique(horizons.begin(), horizons.end()), horizons.end());
    std::vector<BestRow> out;
    for (std::size_t T : horizons) {
        const EvalRecord* best = nullptr;
        for (const auto& r : records) {
            if (r.horizon != T) continue;
            if (best == nullptr || r.r2 > best->r2 ||
                (r.r2 == best->r2 && static_cast<int>(r.family) < static_cast<int>(best->family))) {
                best = &r;
            }
        }
        out.push_back({T, best->family, best->r2, best->fit_seconds, best->test_seconds, best->test_per_sample_seconds});
    }
    return out;
}

} // namespace relscan
