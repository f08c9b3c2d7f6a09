#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <tuple>
#include <vector>

#include "relscan/dataset.hpp"

using namespace relscan;

namespace {

void expect_partition(const SplitManifest& m, std::size_t n) {
    std::vector<std::size_t> all = m.train_ids;
    all.insert(all.end(), m.test_ids.begin(), m.test_ids.end());
    std::sort(all.begin(), all.end());
    ASSERT_EQ(all.size(), n);
    for (std::size_t k = 0; k < n; ++k) ASSERT_EQ(all[k], k);
}

// Brute-force center ordering, computed from the raw (alpha, beta) values.
std::vector<std::size_t> center_order_oracle(const ParamGrid& g) {
    std::vector<std::tuple<double, std::size_t, std::size_t>> rows;
    for (std::size_t i = 0; i < g.n_alpha; ++i) {
        for (std::size_t j = 0; j < g.n_beta; ++j) {
            const double a = g.alpha_min + (g.alpha_max - g.alpha_min) * static_cast<double>(i) / static_cast<double>(g.n_alpha - 1);
            const double b = g.beta_min + (g.beta_max - g.beta_min) * static_cast<double>(j) / static_cast<double>(g.n_beta - 1);
            const double da = (a - 0.5 * (g.alpha_min + g.alpha_max)) / (g.alpha_max - g.alpha_min);
            const double db = (b - 0.5 * (g.beta_min + g.beta_max)) / (g.beta_max - g.beta_min);
            rows.emplace_back(da * da + db * db, i, j);
        }
    }
    std::sort(rows.begin(), rows.end());
    std::vector<std::size_t> ids;
    for (const auto& [d, i, j] : rows) ids.push_back(i * g.n_beta + j);
    return ids;
}

} // namespace

TEST(HorizonDataset, PrefixRows) {
    const std::vector<std::vector<double>> profiles{{1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}};
    const std::vector<double> targets{0.1, 0.2};
    const std::vector<std::size_t> ids{0, 1};
    const auto ds = build_horizon_dataset(profiles, targets, ids, 3);
    ASSERT_EQ(ds.features.rows(), 2u);
    ASSERT_EQ(ds.features.cols(), 3u);
    EXPECT_EQ(ds.features(0, 0), 1.0);
    EXPECT_EQ(ds.features(0, 2), 3.0);
    EXPECT_EQ(ds.features(1, 1), 7.0);
    EXPECT_EQ(ds.targets, targets);

    const auto full = build_horizon_dataset(profiles, targets, ids, 5);
    EXPECT_TRUE(std::equal(full.features.row(1).begin(), full.features.row(1).end(), profiles[1].begin()));
}

TEST(HorizonDataset, TooLongHorizonNamesThePoint) {
    const std::vector<std::vector<double>> profiles{{1, 2, 3}, {1, 2}};
    const std::vector<double> targets{0, 0};
    const std::vector<std::size_t> ids{4, 9};
    try {
        build_horizon_dataset(profiles, targets, ids, 3);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("point 9"), std::string::npos);
    }
}

TEST(HorizonDataset, GridSizedRowCount) {
    const ParamGrid grid;
    std::vector<std::vector<double>> profiles(grid.size(), std::vector<double>(4, 0.0));
    std::vector<double> targets(grid.size(), 0.0);
    std::vector<std::size_t> ids(grid.size());
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    EXPECT_EQ(build_horizon_dataset(profiles, targets, ids, 2).features.rows(), 3600u);
}

TEST(HorizonDataset, RowPermutationRoundTrips) {
    SplitMix64 rng(4);
    std::vector<std::vector<double>> profiles(30, std::vector<double>(6));
    std::vector<double> targets(30);
    std::vector<std::size_t> ids(30);
    for (std::size_t p = 0; p < 30; ++p) {
        for (double& v : profiles[p]) v = uniform01(rng);
        targets[p] = uniform01(rng);
        ids[p] = p;
    }
    const auto ds = build_horizon_dataset(profiles, targets, ids, 6);
    std::vector<std::size_t> perm(30);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    fisher_yates(std::span<std::size_t>(perm), rng);
    const Matrix shuffled = ds.features.select_rows(perm);
    std::vector<std::size_t> inverse(30);
    for (std::size_t k = 0; k < 30; ++k) inverse[perm[k]] = k;
    EXPECT_EQ(shuffled.select_rows(inverse), ds.features);
}

TEST(RandomSplit, SmallCounts) {
    const auto m = random_split(10, 0.4, 7);
    EXPECT_EQ(m.train_ids.size(), 6u);
    EXPECT_EQ(m.test_ids.size(), 4u);
    expect_partition(m, 10);
}

TEST(RandomSplit, PaperGridCount) {
    const auto m = random_split(3600, 0.4, 2024);
    EXPECT_EQ(m.test_ids.size(), 1440u);
    expect_partition(m, 3600);
}

TEST(RandomSplit, DeterministicPerSeed) {
    EXPECT_EQ(random_split(500, 0.4, 3), random_split(500, 0.4, 3));
    EXPECT_NE(random_split(500, 0.4, 3).test_ids, random_split(500, 0.4, 4).test_ids);
    EXPECT_THROW(random_split(10, 1.0, 0), ConfigError);
}

TEST(CenterSplit, ThreeByThreeKeepsOnlyCenter) {
    const ParamGrid g{-3, 5, -2, 4, 3, 3};
    const auto m = center_split(g, 1.0 / 9.0);
    ASSERT_EQ(m.train_ids.size(), 1u);
    EXPECT_EQ(m.train_ids[0], g.id(1, 1));
    expect_partition(m, 9);
}

TEST(CenterSplit, FiveByFiveMatchesBruteForce) {
    const ParamGrid g{-3, 5, -2, 4, 5, 5};
    const auto m = center_split(g, 0.2);
    const std::set<std::size_t> got(m.train_ids.begin(), m.train_ids.end());
    const std::set<std::size_t> want{g.id(2, 2), g.id(1, 2), g.id(3, 2), g.id(2, 1), g.id(2, 3)};
    EXPECT_EQ(got, want);
    const auto order = center_order_oracle(g);
    const std::set<std::size_t> oracle(order.begin(), order.begin() + 5);
    EXPECT_EQ(got, oracle);
}

TEST(CenterSplit, TrainDominatesTestOnRandomGrids) {
    SplitMix64 rng(77);
    for (int rep = 0; rep < 100; ++rep) {
        ParamGrid g;
        g.alpha_min = uniform(rng, -5.0, 0.0);
        g.alpha_max = g.alpha_min + uniform(rng, 0.5, 10.0);
        g.beta_min = uniform(rng, -5.0, 0.0);
        g.beta_max = g.beta_min + uniform(rng, 0.5, 10.0);
        g.n_alpha = 2 + uniform_index(rng, 30);
        g.n_beta = 2 + uniform_index(rng, 30);
        const double frac = uniform(rng, 0.05, 0.95);
        const auto m = center_split(g, frac);
        expect_partition(m, g.size());
        if (m.train_ids.empty() || m.test_ids.empty()) continue;
        double max_train = 0.0;
        double min_test = INFINITY;
        for (std::size_t id : m.train_ids) max_train = std::max(max_train, center_distance(g, id));
        for (std::size_t id : m.test_ids) min_test = std::min(min_test, center_distance(g, id));
        EXPECT_LE(max_train, min_test);
    }
}

TEST(HorizonList, Schedules) {
    std::vector<std::size_t> odd;
    for (std::size_t T = 1; T <= 35; T += 2) odd.push_back(T);
    EXPECT_EQ(horizon_list({1, 2, 35}, 191), odd);
    EXPECT_EQ(horizon_list({1, 2, 35}, 4), (std::vector<std::size_t>{1, 3}));
    EXPECT_EQ(horizon_list({1, 1, 3}, 191), (std::vector<std::size_t>{1, 2, 3}));
    EXPECT_THROW(horizon_list({1, 2, 35}, 0), ConfigError);
}
