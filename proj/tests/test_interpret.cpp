#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "radarfuse/interpret.hpp"
#include "radarfuse/learning.hpp"
#include "support/errors.hpp"
#include "support/fixtures.hpp"

using namespace radarfuse;
using testing_support::throws_kind;

namespace {

std::vector<double> random_stochastic(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.01, 1.0);
    std::vector<double> a(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += a[i * n + j] = u(rng);
        for (std::size_t j = 0; j < n; ++j) a[i * n + j] /= s;
    }
    return a;
}

std::vector<const WindowSample*> pointers(const std::vector<WindowSample>& v) {
    std::vector<const WindowSample*> out;
    for (const auto& s : v) out.push_back(&s);
    return out;
}

double channel_mean(const std::vector<float>& t, std::size_t ch) {
    double m = 0.0;
    for (std::size_t i = ch; i < t.size(); i += 2) m += t[i];
    return m / static_cast<double>(t.size() / 2);
}

double channel_std(const std::vector<float>& t, std::size_t ch) {
    const double m = channel_mean(t, ch);
    double v = 0.0;
    for (std::size_t i = ch; i < t.size(); i += 2) v += (t[i] - m) * (t[i] - m);
    return std::sqrt(v / static_cast<double>(t.size() / 2));
}

}  // namespace

TEST(NodeImportance, UniformAttentionGivesOnes) {
    const std::size_t n = 5;
    const std::vector<double> a(n * n, 1.0 / n);
    for (double v : node_importance(a, n)) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(NodeImportance, ConcentratedColumn) {
    const std::vector<double> a = {1.0, 0.0, 1.0, 0.0};
    EXPECT_EQ(node_importance(a, 2), (std::vector<double>{2.0, 0.0}));
}

TEST(NodeImportance, SumsToNodeCount) {
    std::mt19937_64 rng(1);
    for (std::size_t n : {1, 2, 5, 9}) {
        const auto imp = node_importance(random_stochastic(n, rng), n);
        EXPECT_NEAR(std::accumulate(imp.begin(), imp.end(), 0.0), static_cast<double>(n), 1e-5);
    }
}

TEST(NodeImportance, CommutesWithPermutation) {
    std::mt19937_64 rng(2);
    const std::size_t n = 5;
    const auto a = random_stochastic(n, rng);
    const std::vector<std::size_t> p = {3, 0, 4, 1, 2};
    std::vector<double> pa(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) pa[p[i] * n + p[j]] = a[i * n + j];
    const auto imp = node_importance(a, n), pimp = node_importance(pa, n);
    for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(pimp[p[j]], imp[j], 1e-12);
}

TEST(NodeImportance, NonStochasticRowIsContractError) {
    std::vector<double> a = {0.5, 0.5, 0.5, 0.50002};
    EXPECT_TRUE(throws_kind([&] { node_importance(a, 2); }, ErrorKind::contract));
    a[3] = 0.500001;  // within 1e-5
    EXPECT_NO_THROW(node_importance(a, 2));
    EXPECT_TRUE(throws_kind([&] { node_importance(a, 3); }, ErrorKind::dimension));
}

TEST(DatasetImportance, SingleSampleMatchesItsAttention) {
    const auto cfg = fixture::model_for(12, 4, 6);
    const auto state = init_model(cfg, 5);
    std::mt19937_64 rng(3);
    const auto s = fixture::random_window(cfg, rng);
    const WindowSample* batch[] = {&s};
    const auto di = dataset_importance(state, batch);
    const auto direct = node_importance(forward(state, batch).attention.data(), 4);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(di.mean[j], direct[j]);
    EXPECT_EQ(std::accumulate(di.argmax_counts.begin(), di.argmax_counts.end(), std::size_t{0}), 1u);
}

TEST(DatasetImportance, HistogramCountsSamples) {
    const auto cfg = fixture::model_for(12, 4, 6);
    const auto state = init_model(cfg, 6);
    std::mt19937_64 rng(4);
    std::vector<WindowSample> data;
    for (int i = 0; i < 37; ++i) data.push_back(fixture::random_window(cfg, rng));
    const auto di = dataset_importance(state, pointers(data), 8);
    EXPECT_EQ(di.samples, 37u);
    EXPECT_EQ(std::accumulate(di.argmax_counts.begin(), di.argmax_counts.end(), std::size_t{0}), 37u);
    EXPECT_NEAR(std::accumulate(di.mean.begin(), di.mean.end(), 0.0), 4.0, 1e-5);
}

TEST(Ablate, ZerosClearsOnlyThatNode) {
    std::mt19937_64 rng(5);
    const auto s = fixture::random_window(fixture::model_for(10, 3, 4), rng);
    const auto copy = s;
    const auto a = ablate(s, 1, AblationMode::zeros, 0);
    for (float v : a.nodes[1]) EXPECT_EQ(v, 0.0f);
    EXPECT_EQ(a.nodes[0], s.nodes[0]);
    EXPECT_EQ(a.nodes[2], s.nodes[2]);
    EXPECT_EQ(s.nodes, copy.nodes);  // input untouched
}

TEST(Ablate, RandomMatchesChannelMoments) {
    std::mt19937_64 rng(6);
    const auto s = fixture::random_window(fixture::model_for(100, 2, 50), rng);
    const auto a = ablate(s, 0, AblationMode::random, 9);
    for (std::size_t ch = 0; ch < 2; ++ch) {
        const double sd = channel_std(s.nodes[0], ch);
        EXPECT_NEAR(channel_std(a.nodes[0], ch), sd, 0.1 * sd);
        EXPECT_NEAR(channel_mean(a.nodes[0], ch), channel_mean(s.nodes[0], ch), 0.1 * sd);
    }
    EXPECT_NE(a.nodes[0], s.nodes[0]);
    EXPECT_EQ(a.nodes[1], s.nodes[1]);
    EXPECT_EQ(ablate(s, 0, AblationMode::random, 9).nodes, a.nodes);
}

TEST(Ablate, NodeOutOfRangeIsIndexError) {
    std::mt19937_64 rng(7);
    const auto s = fixture::random_window(fixture::model_for(10, 3, 4), rng);
    EXPECT_TRUE(throws_kind([&] { ablate(s, 3, AblationMode::zeros, 0); }, ErrorKind::index));
}

TEST(Spearman, KnownValues) {
    const std::vector<double> a = {1, 2, 3, 4, 5};
    const std::vector<double> up = {2, 4, 6, 8, 100}, down = {5, 4, 3, 2, 1};
    EXPECT_NEAR(spearman(a, up), 1.0, 1e-12);
    EXPECT_NEAR(spearman(a, down), -1.0, 1e-12);
    // ties take average ranks: b ranks (1.5, 1.5, 3, 4, 5)
    const std::vector<double> tied = {0, 0, 1, 2, 3};
    const std::vector<double> ra = {1, 2, 3, 4, 5}, rb = {1.5, 1.5, 3, 4, 5};
    double sab = 0, saa = 0, sbb = 0;
    for (int i = 0; i < 5; ++i) {
        sab += (ra[i] - 3) * (rb[i] - 3);
        saa += (ra[i] - 3) * (ra[i] - 3);
        sbb += (rb[i] - 3) * (rb[i] - 3);
    }
    EXPECT_NEAR(spearman(a, tied), sab / std::sqrt(saa * sbb), 1e-12);
    const std::vector<double> flat = {1, 1, 1, 1, 1};
    EXPECT_EQ(spearman(a, flat), 0.0);
}

TEST(AblationStudy, RowsAndControl) {
    const auto cfg = fixture::model_for(12, 3, 6);
    const auto state = init_model(cfg, 8);
    std::mt19937_64 rng(8);
    std::vector<WindowSample> data;
    for (int i = 0; i < 12; ++i) data.push_back(fixture::random_window(cfg, rng, i % 9));
    const auto batch = pointers(data);
    const auto study = importance_ablation_study(state, batch, 3);
    EXPECT_EQ(study.rows.size(), 2u * 3u);
    EXPECT_EQ(study.baseline, evaluate(state, batch).accuracy);
    std::vector<std::size_t> ranks;
    for (const auto& r : study.rows) {
        EXPECT_GE(r.accuracy, 0.0);
        EXPECT_LE(r.accuracy, 1.0);
        EXPECT_NEAR(r.drop, study.baseline - r.accuracy, 1e-15);
        if (r.mode == AblationMode::zeros) ranks.push_back(r.rank);
    }
    std::sort(ranks.begin(), ranks.end());
    EXPECT_EQ(ranks, (std::vector<std::size_t>{1, 2, 3}));

    const auto csv = to_csv(study);
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 1 + 6);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "node,mode,importance,argmax_count,rank,accuracy,baseline_acc,drop");
}

TEST(AblationStudy, ZeroAblationRowMatchesManualEvaluation) {
    const auto cfg = fixture::model_for(12, 3, 6);
    const auto state = init_model(cfg, 9);
    std::mt19937_64 rng(9);
    std::vector<WindowSample> data, zeroed;
    for (int i = 0; i < 10; ++i) data.push_back(fixture::random_window(cfg, rng, i % 9));
    for (const auto& s : data) zeroed.push_back(ablate(s, 2, AblationMode::zeros, 0));
    const auto study = importance_ablation_study(state, pointers(data), 1);
    for (const auto& r : study.rows)
        if (r.node == 2 && r.mode == AblationMode::zeros) EXPECT_EQ(r.accuracy, evaluate(state, pointers(zeroed)).accuracy);
}
