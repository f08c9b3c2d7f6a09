#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "relscan/metrics.hpp"

using namespace relscan;

namespace {

ProxyProfile profile_at(std::size_t first_t, std::vector<double> smoothed) {
    ProxyProfile p;
    p.lookback = first_t;
    p.raw = smoothed;
    p.smoothed = std::move(smoothed);
    return p;
}

// Direct transcription of the score definitions over t = lo..hi.
ProfileMetrics oracle(const std::vector<double>& lam, std::size_t first_t, std::size_t lo, std::size_t hi, double eps) {
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
        m0 += std::max(0.0, -lam[t - first_t]);
        mt += static_cast<double>(t) * std::max(0.0, -lam[t - first_t]);
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

} // namespace

TEST(ComputeMetrics, HandEvaluatedExample) {
    const auto p = profile_at(10, {0.5, -0.2, -0.4, 0.1});
    const MetricWindow w{10, 200, 1e-8};
    const auto m = compute_metrics(p, w);
    EXPECT_EQ(m.t_min, 12u);
    EXPECT_DOUBLE_EQ(m.y_min, -0.4);
    EXPECT_NEAR(m.s_min, 0.4 / 12.0, 1e-9);
    EXPECT_NEAR(m.s_min, 0.033333, 1e-6);
    EXPECT_NEAR(m.m0, 0.6, 1e-15);
    EXPECT_NEAR(m.t_bar, 11.6667, 1e-4);
    EXPECT_NEAR(m.s_mom, 0.051429, 1e-6);
    ASSERT_TRUE(m.t_enter_neg.has_value());
    EXPECT_EQ(*m.t_enter_neg, 11u);
}

TEST(ComputeMetrics, NonnegativeProfileHasNoNegativeMass) {
    const auto m = compute_metrics(profile_at(10, {0.3, 0.0, 0.7, 0.2}), MetricWindow{});
    EXPECT_EQ(m.m0, 0.0);
    EXPECT_EQ(m.s_mom, 0.0);
    EXPECT_EQ(m.t_bar, 0.0);
    EXPECT_FALSE(m.t_enter_neg.has_value());
    EXPECT_LE(m.s_min, 0.0);
}

TEST(ComputeMetrics, ConstantNegativeProfileTakesEarliestMinimum) {
    const auto m = compute_metrics(profile_at(10, std::vector<double>(6, -0.7)), MetricWindow{});
    EXPECT_EQ(m.t_min, 10u);
    EXPECT_DOUBLE_EQ(m.y_min, -0.7);
}

TEST(ComputeMetrics, WindowClipsToProfile) {
    // Profile starts at t_end = 5 but the window starts at 10.
    std::vector<double> v(12, 0.1);
    v[2] = -5.0;    // t = 7, outside the window
    v[8] = -1.0;    // t = 13
    const auto m = compute_metrics(profile_at(5, v), MetricWindow{10, 200, 1e-8});
    EXPECT_EQ(m.t_min, 13u);
    EXPECT_DOUBLE_EQ(m.y_min, -1.0);
}

TEST(ComputeMetrics, EmptyEffectiveWindowIsConfigError) {
    EXPECT_THROW(compute_metrics(profile_at(5, {0.1, 0.2}), MetricWindow{10, 200, 1e-8}), ConfigError);
}

TEST(ComputeMetrics, MatchesDirectFormulaOracle) {
    SplitMix64 rng(808);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t n = 5 + uniform_index(rng, 200);
        std::vector<double> lam(n);
        for (double& v : lam) v = uniform(rng, -1.0, 0.6);
        const auto p = profile_at(5, lam);
        const MetricWindow w{10, 200, 1e-8};
        const std::size_t hi = std::min<std::size_t>(200, 5 + n - 1);
        if (hi < 10) continue;
        const auto got = compute_metrics(p, w);
        const auto want = oracle(lam, 5, 10, hi, 1e-8);
        ASSERT_EQ(got.t_min, want.t_min);
        ASSERT_NEAR(got.y_min, want.y_min, 1e-12);
        ASSERT_NEAR(got.s_min, want.s_min, 1e-12);
        ASSERT_NEAR(got.m0, want.m0, 1e-12);
        ASSERT_NEAR(got.t_bar, want.t_bar, 1e-12 * std::max(1.0, want.t_bar));
        ASSERT_NEAR(got.s_mom, want.s_mom, 1e-12);
        ASSERT_EQ(got.t_enter_neg, want.t_enter_neg);
    }
}

TEST(ComputeMetrics, DeepeningNegativeValuesNeverLowersScores) {
    SplitMix64 rng(9);
    for (int rep = 0; rep < 200; ++rep) {
        std::vector<double> lam(40);
        for (double& v : lam) v = uniform(rng, -0.5, 0.5);
        const double c = 1.0 + uniform(rng, 0.01, 3.0);
        std::vector<double> deeper = lam;
        for (double& v : deeper)
            if (v < 0.0) v *= c;
        const auto a = compute_metrics(profile_at(10, lam), MetricWindow{});
        const auto b = compute_metrics(profile_at(10, deeper), MetricWindow{});
        EXPECT_GE(b.s_min, a.s_min);
        EXPECT_GE(b.s_mom, a.s_mom - 1e-15);
    }
}

TEST(ComputeMetrics, ShiftingRightLowersSmin) {
    const std::vector<double> lam{0.2, -0.1, -0.6, -0.3, 0.1, 0.0};
    const auto base = compute_metrics(profile_at(10, lam), MetricWindow{10, 200, 1e-8});
    for (std::size_t delta : {1u, 5u, 30u}) {
        const auto shifted = compute_metrics(profile_at(10 + delta, lam), MetricWindow{10 + delta, 200, 1e-8});
        EXPECT_LT(shifted.s_min, base.s_min);
        EXPECT_EQ(shifted.t_min, base.t_min + delta);
    }
}

TEST(GoodSubset, PaperGridCount) {
    std::vector<double> scores(3600);
    SplitMix64 rng(1);
    for (double& s : scores) s = uniform01(rng);
    const auto g = good_subset_threshold(scores, 0.2);
    EXPECT_EQ(g.selected_count, 720u);
    EXPECT_EQ(std::count(g.mask.begin(), g.mask.end(), true), 720);
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (g.mask[i]) EXPECT_GE(scores[i], g.threshold);
        else EXPECT_LE(scores[i], g.threshold);
    }
}

TEST(GoodSubset, TenEvenlySpacedScores) {
    std::vector<double> scores;
    for (int k = 1; k <= 10; ++k) scores.push_back(0.1 * k);
    const auto g = good_subset_threshold(scores, 0.2);
    EXPECT_EQ(g.selected_count, 2u);
    EXPECT_DOUBLE_EQ(g.threshold, 0.9);
}

TEST(GoodSubset, TiesGoToLowerIndices) {
    const std::vector<double> scores(8, 0.5);
    const auto g = good_subset_threshold(scores, 0.5);
    EXPECT_EQ(g.selected_count, 4u);
    for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(g.mask[i], i < 4);
}

TEST(GoodSubset, CountStaysWithinOneOfFraction) {
    SplitMix64 rng(12);
    for (int rep = 0; rep < 300; ++rep) {
        const std::size_t n = 1 + uniform_index(rng, 500);
        const double f = uniform(rng, 0.01, 0.99);
        std::vector<double> scores(n);
        for (double& s : scores) s = uniform01(rng);
        const auto g = good_subset_threshold(scores, f);
        const double ratio = static_cast<double>(g.selected_count) / static_cast<double>(n);
        EXPECT_GE(ratio, f - 1.0 / static_cast<double>(n));
        EXPECT_LE(ratio, f + 1.0 / static_cast<double>(n));
    }
}

TEST(GoodSubset, InvalidFractionThrows) {
    const std::vector<double> s{1.0, 2.0};
    EXPECT_THROW(good_subset_threshold(s, 0.0), ConfigError);
    EXPECT_THROW(good_subset_threshold(std::vector<double>{}, 0.5), ConfigError);
}

TEST(TimingSummary, MedianAndProfileIndex) {
    std::vector<ProfileMetrics> m(5);
    for (auto& x : m) x.t_min = 21;
    m[4].t_min = 90;
    m[0].t_enter_neg = 12;
    const std::vector<bool> good{true, true, true, true, false};
    const auto s = timing_summary(m, good, 5, 5);
    EXPECT_DOUBLE_EQ(s.median_t_min_good, 21.0);
    EXPECT_EQ(s.T_min, 17u);
    const auto alt = timing_summary(m, good, 5, 5, 5, ProfileIndexOrigin::warmup);
    EXPECT_EQ(alt.T_min, 12u);

    std::size_t good_total = 0;
    std::size_t rest_total = 0;
    for (const auto& b : s.t_min_hist) {
        good_total += b.count_good;
        rest_total += b.count_rest;
    }
    EXPECT_EQ(good_total, 4u);
    EXPECT_EQ(rest_total, 1u);
    // Absent t_enter_neg values are excluded.
    std::size_t enter_total = 0;
    for (const auto& b : s.t_enter_neg_hist) enter_total += b.count_good + b.count_rest;
    EXPECT_EQ(enter_total, 1u);
}

TEST(TimingSummary, SinglePointAndEmptyGood) {
    std::vector<ProfileMetrics> m(1);
    m[0].t_min = 33;
    EXPECT_DOUBLE_EQ(timing_summary(m, {true}, 5, 5).median_t_min_good, 33.0);
    EXPECT_THROW(timing_summary(m, {false}, 5, 5), ConfigError);
}

TEST(RequiredIterations, CostTable) {
    struct Row {
        std::size_t T, k;
        double speedup;
    };
    for (const Row& r : {Row{1, 10, 20.0}, Row{3, 12, 16.7}, Row{11, 20, 10.0}, Row{35, 44, 4.5}}) {
        const auto c = required_iterations(r.T, 5, 5, 200);
        EXPECT_EQ(c.k_req, r.k);
        EXPECT_NEAR(std::round(c.speedup * 10.0) / 10.0, r.speedup, 1e-12);
    }
    EXPECT_THROW(required_iterations(0, 5, 5, 200), ConfigError);
}

TEST(MetricWindow, StartIsConstrainedByEmbedding) {
    EXPECT_EQ(MetricWindow::for_embedding(EmbeddingConfig{}).t_start, 10u);
    EmbeddingConfig wide;
    wide.lookback = 8;
    wide.h_max = 6;
    EXPECT_EQ(MetricWindow::for_embedding(wide).t_start, 14u);
}
