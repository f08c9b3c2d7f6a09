// Acceptance checks: one PASS/FAIL line per criterion. Exit status is 0 only
// when every criterion passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "relscan/config.hpp"
#include "relscan/dataset.hpp"
#include "relscan/io.hpp"
#include "relscan/metrics.hpp"
#include "relscan/pipeline.hpp"
#include "relscan/profiler.hpp"
#include "relscan/regression.hpp"
#include "relscan/solver.hpp"
#include "relscan/validation.hpp"

using namespace relscan;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------
// Shared oracles

ProfileMetrics metrics_oracle(const std::vector<double>& lam, std::size_t first_t, std::size_t lo, std::size_t hi, double eps) {
    ProfileMetrics m;
    double best = INFINITY;
    for (std::size_t t = lo; t <= hi; ++t) {
        if (lam[t - first_t] < best) {
            best = lam[t - first_t];
            m.t_min = t;
        }
    }
    m.y_min = best;
    m.s_min = -m.y_min / (static_cast<double>(m.t_min) + eps);
    double m0 = 0.0;
    double mt = 0.0;
    for (std::size_t t = lo; t <= hi; ++t) {
        const double neg = std::max(0.0, -lam[t - first_t]);
        m0 += neg;
        mt += static_cast<double>(t) * neg;
    }
    m.m0 = m0;
    m.t_bar = m0 > 0.0 ? mt / (m0 + eps) : 0.0;
    m.s_mom = m0 > 0.0 ? m0 / (m.t_bar + eps) : 0.0;
    for (std::size_t t = lo; t <= hi; ++t) {
        if (lam[t - first_t] < 0.0) {
            m.t_enter_neg = t;
            break;
        }
    }
    return m;
}

std::vector<double> trailing_mean_oracle(const std::vector<double>& raw, std::size_t w) {
    std::vector<double> out;
    for (std::size_t j = 0; j < raw.size(); ++j) {
        double s = 0.0;
        std::size_t c = 0;
        for (std::size_t m = (j + 1 >= w ? j + 1 - w : 0); m <= j; ++m) {
            s += raw[m];
            ++c;
        }
        out.push_back(s / static_cast<double>(c));
    }
    return out;
}

std::vector<MicroSeries> geometric_ensemble(std::size_t runs, std::size_t K, double rate, std::uint64_t seed, double noise) {
    SplitMix64 rng(seed);
    std::vector<MicroSeries> out;
    for (std::size_t r = 0; r < runs; ++r) {
        const double c = uniform(rng, 0.5, 2.0);
        std::vector<double> v(K);
        for (std::size_t k = 0; k < K; ++k) v[k] = c * std::pow(rate, static_cast<double>(k + 1)) + noise * standard_normal(rng);
        out.push_back(MicroSeries{std::move(v), std::nullopt});
    }
    return out;
}

fs::path fresh_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("relscan_acceptance_" + name);
    fs::remove_all(p);
    return p;
}

// ---------------------------------------------------------------------------
// Criteria

Outcome cost_model() {
    struct Row {
        std::size_t T;
        std::size_t k_req;
        const char* speedup;
    };
    const Row table[] = {{1, 10, "20.0"}, {3, 12, "16.7"}, {11, 20, "10.0"}, {35, 44, "4.5"}};
    std::string detail;
    bool ok = true;
    for (const Row& r : table) {
        const CostEstimate c = required_iterations(r.T, 5, 5, 200);
        const std::string s = fmt::format("{:.1f}", c.speedup);
        ok = ok && c.k_req == r.k_req && s == r.speedup;
        detail += fmt::format("T={}:k={},{}x ", r.T, c.k_req, s);
    }
    return {ok, detail};
}

Outcome setup_constants() {
    const EmbeddingConfig emb;
    const std::size_t t_start = MetricWindow::for_embedding(emb).t_start;
    const std::size_t W = emb.profile_length(200);

    const ParamGrid grid = PipelineConfig::desk().grid;
    const auto problem = PolynomialProblem::roots_of_unity(7);
    const StabilizationConfig stab;
    bool locality = true;
    std::size_t checked = 0;
    for (std::size_t id : {std::size_t{0}, std::size_t{137}, std::size_t{250}}) {
        const GridPoint p = grid.point(id, 99);
        auto profile_for = [&](std::size_t K) {
            const auto ens = run_ensemble(p, problem, 32, K, stab, InitStrategy::random_box);
            std::vector<MicroSeries> series;
            for (const auto& t : ens) series.push_back(micro_series(t, stab));
            return proxy_profile(series, emb, K, p.seed).raw;
        };
        const auto full = profile_for(200);
        for (std::size_t T : {1u, 3u, 11u, 35u}) {
            const auto part = profile_for(T + 9);
            locality = locality && part.size() >= T && std::equal(part.begin(), part.begin() + static_cast<std::ptrdiff_t>(T), full.begin());
            ++checked;
        }
    }
    return {t_start == 10 && W == 191 && locality,
            fmt::format("t_start={} W={} prefix locality exact on {} (point, T) cases: {}", t_start, W, checked,
                        locality ? "yes" : "no")};
}

Outcome metric_oracle() {
    const auto t0 = Clock::now();
    SplitMix64 rng(4242);
    double worst = 0.0;
    bool exact_indices = true;
    const MetricWindow w{10, 200, 1e-8};
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 6 + uniform_index(rng, 220);
        std::vector<double> lam(n);
        for (double& v : lam) v = uniform(rng, -1.0, 0.7);
        ProxyProfile p;
        p.lookback = 5;
        p.raw = lam;
        p.smoothed = lam;
        const std::size_t hi = std::min<std::size_t>(200, 5 + n - 1);
        const auto got = compute_metrics(p, w);
        const auto want = metrics_oracle(lam, 5, 10, hi, 1e-8);
        exact_indices = exact_indices && got.t_min == want.t_min && got.t_enter_neg == want.t_enter_neg;
        for (auto [a, b] : {std::pair{got.y_min, want.y_min}, {got.s_min, want.s_min}, {got.m0, want.m0},
                            {got.s_mom, want.s_mom}, {got.t_bar / std::max(1.0, want.t_bar), want.t_bar / std::max(1.0, want.t_bar)}}) {
            worst = std::max(worst, std::abs(a - b));
        }
    }
    double worst_smooth = 0.0;
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 1 + uniform_index(rng, 200);
        const std::size_t win = 1 + uniform_index(rng, 8);
        std::vector<double> raw(n);
        for (double& v : raw) v = uniform(rng, -2.0, 2.0);
        const auto got = smooth_profile(raw, win);
        const auto want = trailing_mean_oracle(raw, win);
        for (std::size_t j = 0; j < n; ++j) worst_smooth = std::max(worst_smooth, std::abs(got[j] - want[j]));
    }
    const double secs = seconds_since(t0);
    return {exact_indices && worst <= 1e-12 && worst_smooth <= 1e-12 && secs < 10.0,
            fmt::format("max metric diff {:.2e}, max smoothing diff {:.2e}, indices exact: {}, {:.2f} s", worst, worst_smooth,
                        exact_indices ? "yes" : "no", secs)};
}

Outcome good_subset() {
    SplitMix64 rng(3600);
    std::vector<double> scores(3600);
    for (double& s : scores) s = uniform01(rng);
    const auto g = good_subset_threshold(scores, 0.2);
    const auto marked = std::count(g.mask.begin(), g.mask.end(), true);
    return {g.selected_count == 720 && marked == 720, fmt::format("selected {} of 3600 (mask {})", g.selected_count, marked)};
}

Outcome split_properties() {
    const auto t0 = Clock::now();
    const auto m = random_split(3600, 0.4, 2024);
    std::vector<std::size_t> all = m.train_ids;
    all.insert(all.end(), m.test_ids.begin(), m.test_ids.end());
    std::sort(all.begin(), all.end());
    std::vector<std::size_t> want(3600);
    std::iota(want.begin(), want.end(), std::size_t{0});
    const bool cover = all == want;

    SplitMix64 rng(100);
    int dominated = 0;
    for (int rep = 0; rep < 100; ++rep) {
        ParamGrid g;
        g.alpha_min = uniform(rng, -5.0, 0.0);
        g.alpha_max = g.alpha_min + uniform(rng, 0.5, 10.0);
        g.beta_min = uniform(rng, -5.0, 0.0);
        g.beta_max = g.beta_min + uniform(rng, 0.5, 10.0);
        g.n_alpha = 2 + uniform_index(rng, 40);
        g.n_beta = 2 + uniform_index(rng, 40);
        const auto c = center_split(g, uniform(rng, 0.05, 0.95));
        double max_train = 0.0;
        double min_test = INFINITY;
        for (std::size_t id : c.train_ids) max_train = std::max(max_train, center_distance(g, id));
        for (std::size_t id : c.test_ids) min_test = std::min(min_test, center_distance(g, id));
        if (max_train <= min_test && c.train_ids.size() + c.test_ids.size() == g.size()) ++dominated;
    }
    const double secs = seconds_since(t0);
    return {m.test_ids.size() == 1440 && cover && dominated == 100 && secs < 5.0,
            fmt::format("random: {} test ids, disjoint cover: {}; center dominance on {}/100 grids; {:.2f} s", m.test_ids.size(),
                        cover ? "yes" : "no", dominated, secs)};
}

Outcome regression_sanity() {
    SplitMix64 rng(6);
    const std::size_t n = 60;
    const std::size_t d = 4;
    Matrix x(n, d);
    std::vector<double> y(n);
    const double w_true[] = {1.5, -2.0, 0.25, 3.0};
    for (std::size_t r = 0; r < n; ++r) {
        y[r] = 0.7;
        for (std::size_t c = 0; c < d; ++c) {
            x(r, c) = uniform(rng, -1.0, 1.0);
            y[r] += w_true[c] * x(r, c);
        }
    }
    ModelSpec ridge0 = default_spec(Family::ridge);
    ridge0.ridge.l2 = 0.0;
    Matrix probe(1, d);
    probe(0, 0) = 0.3;
    probe(0, 1) = -0.9;
    probe(0, 2) = 2.0;
    probe(0, 3) = 0.1;
    const double truth = 0.7 + 1.5 * 0.3 + 2.0 * 0.9 + 0.25 * 2.0 + 3.0 * 0.1;
    const double ridge_err = std::abs(fit(ridge0, x, y).predict(probe)[0] - truth);

    ModelSpec knn1 = default_spec(Family::knn);
    knn1.knn.k = 1;
    const auto knn_pred = fit(knn1, x, y).predict(x);
    const bool knn_exact = knn_pred == y;

    const Scores perfect = evaluate(y, y);
    const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    const Scores mean_pred = evaluate(y, std::vector<double>(n, mean));

    std::vector<double> y_noisy = y;
    for (double& v : y_noisy) v += 0.1 * standard_normal(rng);
    ModelSpec en = default_spec(Family::elastic_net);
    en.elastic_net.l1_ratio = 0.0;
    en.elastic_net.penalty = 0.05;
    en.elastic_net.tol = 1e-12;
    en.elastic_net.max_iter = 100000;
    ModelSpec rg = default_spec(Family::ridge);
    rg.ridge.l2 = static_cast<double>(n) * en.elastic_net.penalty;
    const auto p_en = fit(en, x, y_noisy).predict(x);
    const auto p_rg = fit(rg, x, y_noisy).predict(x);
    double en_diff = 0.0;
    for (std::size_t r = 0; r < n; ++r) en_diff = std::max(en_diff, std::abs(p_en[r] - p_rg[r]));

    const bool ok = ridge_err <= 1e-6 && knn_exact && perfect.mae == 0.0 && perfect.rmse == 0.0 && perfect.r2 == 1.0 &&
                    std::abs(mean_pred.r2) <= 1e-12 && en_diff <= 1e-4;
    return {ok, fmt::format("ridge err {:.1e}; knn k=1 exact: {}; perfect ({}, {}, {}); mean-predictor r2 {:.1e}; "
                            "EN vs ridge {:.1e}",
                            ridge_err, knn_exact ? "yes" : "no", perfect.mae, perfect.rmse, perfect.r2, mean_pred.r2, en_diff)};
}

struct DeskRuns {
    fs::path first;
    fs::path second;
    double first_seconds = 0.0;
    std::string error;
};

DeskRuns run_desk_twice() {
    DeskRuns runs;
    runs.first = fresh_dir("desk_a");
    runs.second = fresh_dir("desk_b");
    try {
        auto cfg = PipelineConfig::desk();
        cfg.output_dir = runs.first.string();
        const auto t0 = Clock::now();
        run_pipeline(cfg, Stage::all, {0, {}});
        runs.first_seconds = seconds_since(t0);
        cfg.output_dir = runs.second.string();
        run_pipeline(cfg, Stage::all, {1, {}});
    } catch (const std::exception& e) {
        runs.error = e.what();
    }
    return runs;
}

Outcome desk_behavior(const DeskRuns& runs) {
    if (!runs.error.empty()) return {false, "desk run failed: " + runs.error};
    const auto records = load_eval_records(runs.first);
    const auto random = records_for_split(records, SplitKind::random);
    const auto best = best_by_horizon(random);
    if (best.empty()) return {false, "no evaluation records"};

    // Non-decreasing up to dips: no value falls more than 0.05 below the best so far.
    double running = -INFINITY;
    double worst_dip = 0.0;
    for (const auto& b : best) {
        running = std::max(running, b.r2);
        worst_dip = std::max(worst_dip, running - b.r2);
    }
    const double gain = best.back().r2 - best.front().r2;

    bool nonlinear_wins = true;
    std::string early;
    for (const auto& b : best) {
        if (b.horizon > 5) continue;
        double lin = -INFINITY;
        double nonlin = -INFINITY;
        for (const auto& r : random) {
            if (r.horizon != b.horizon) continue;
            (is_linear(r.family) ? lin : nonlin) = std::max(is_linear(r.family) ? lin : nonlin, r.r2);
        }
        nonlinear_wins = nonlinear_wins && nonlin > lin;
        early += fmt::format(" T={}:{:.3f}>{:.3f}", b.horizon, nonlin, lin);
    }
    // The center split extrapolates to the grid rim; reported for information only.
    const auto center = best_by_horizon(records_for_split(records, SplitKind::center));
    const std::string center_info =
        center.empty() ? std::string("none")
                       : fmt::format("{} {:.3f} at T={} -> {} {:.3f} at T={}", to_string(center.front().family), center.front().r2,
                                     center.front().horizon, to_string(center.back().family), center.back().r2, center.back().horizon);

    const bool fast = runs.first_seconds < 15.0 * 60.0;
    const bool ok = fast && worst_dip <= 0.05 && gain >= 0.1 && nonlinear_wins && best.front().horizon == 1;
    return {ok, fmt::format("random split, T=1..{}: {:.1f} s; r2 {:.3f} -> {:.3f} (gain {:.3f}); worst dip {:.3f}; "
                            "nonlinear vs linear{}; center split (info): {}",
                            best.back().horizon, runs.first_seconds, best.front().r2, best.back().r2, gain, worst_dip, early,
                            center_info)};
}

Outcome determinism(const DeskRuns& runs) {
    if (!runs.error.empty()) return {false, "desk run failed: " + runs.error};
    std::size_t compared = 0;
    std::vector<std::string> differing;
    auto compare = [&](const fs::path& rel) {
        ++compared;
        const fs::path b = runs.second / rel;
        if (!fs::exists(b) || read_file(runs.first / rel) != read_file(b)) differing.push_back(rel.generic_string());
    };
    compare("metrics_grid.csv");
    for (const char* dir : {"datasets", "splits", "predictions"}) {
        for (const auto& e : fs::recursive_directory_iterator(runs.first / dir)) {
            if (e.is_regular_file()) compare(fs::relative(e.path(), runs.first));
        }
    }
    return {differing.empty() && compared > 3,
            fmt::format("{} files compared across runs with 0 and 1 workers, {} differ{}", compared, differing.size(),
                        differing.empty() ? "" : " (first: " + differing.front() + ")")};
}

Outcome convergence_validation() {
    const auto problem = PolynomialProblem::roots_of_unity(7);
    ValidationOptions opts;
    opts.seed = 20240601;
    const auto run = run_validation(problem, {0.0, 0.0}, InitStrategy::near_root, {}, opts);
    double worst = 0.0;
    for (double p : {2.0, 3.0, 6.0}) {
        std::vector<double> e{0.5};
        while (e.size() < (p > 5.0 ? 4u : 5u)) e.push_back(0.8 * std::pow(e.back(), p));
        worst = std::max(worst, std::abs(empirical_order(e) - p));
    }
    const bool ok = std::abs(run.observed_order - 2.0) <= 0.3 && worst <= 1e-6;
    return {ok, fmt::format("observed order {:.4f} at (0,0); synthetic orders recovered within {:.1e}", run.observed_order, worst)};
}

Outcome proxy_sign() {
    const EmbeddingConfig emb;
    const std::size_t K = 30;
    int negative = 0;
    int nonnegative = 0;
    const int reps = 50;
    for (int r = 0; r < reps; ++r) {
        const auto rr = static_cast<std::uint64_t>(r);
        const auto down = geometric_ensemble(40, K, 0.5, derive_seed(11, rr), 1e-6);
        const auto up = geometric_ensemble(40, K, 1.5, derive_seed(12, rr), 1e-6);
        ProxyProfile pd = proxy_profile(down, emb, K, derive_seed(13, rr));
        ProxyProfile pu = proxy_profile(up, emb, K, derive_seed(14, rr));
        apply_smoothing(pd, 4);
        apply_smoothing(pu, 4);
        if (*std::min_element(pd.smoothed.begin(), pd.smoothed.end()) < 0.0) ++negative;
        if (*std::min_element(pu.smoothed.begin(), pu.smoothed.end()) >= 0.0) ++nonnegative;
    }
    const int need = 45;
    return {negative >= need && nonnegative >= need,
            fmt::format("contracting: negative minimum in {}/{}; expanding: nonnegative profile in {}/{}", negative, reps,
                        nonnegative, reps)};
}

} // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        std::function<Outcome()> check;
    };
    DeskRuns desk;
    bool desk_ran = false;
    auto with_desk = [&](auto check) {
        return [&, check] {
            if (!desk_ran) {
                desk = run_desk_twice();
                desk_ran = true;
            }
            return check(desk);
        };
    };
    const std::vector<Criterion> criteria{
        {1, "cost model exact", cost_model},
        {2, "setup constants and prefix locality", setup_constants},
        {3, "metric and smoothing oracles", metric_oracle},
        {4, "good-subset counting", good_subset},
        {5, "split properties", split_properties},
        {6, "regression sanity", regression_sanity},
        {7, "desk-scale pipeline behavior", with_desk(desk_behavior)},
        {8, "determinism", with_desk(determinism)},
        {9, "convergence validation", convergence_validation},
        {10, "proxy sign correctness", proxy_sign},
    };
    int passed = 0;
    for (const auto& c : criteria) {
        Outcome o;
        try {
            o = c.check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        passed += o.pass ? 1 : 0;
        fmt::print("{} criterion {}: {} -- {}\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail);
        std::fflush(stdout);
    }
    fmt::print("{}/{} criteria passed\n", passed, criteria.size());
    return passed == static_cast<int>(criteria.size()) ? 0 : 1;
}
