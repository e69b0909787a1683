#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "radarfuse/error.hpp"
#include "radarfuse/learning.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace radarfuse;

namespace {

Tensor probs_rows(std::vector<std::vector<double>> rows) {
    std::vector<double> flat;
    for (auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
    return Tensor::from_data({rows.size(), rows.front().size()}, flat);
}

std::vector<std::vector<double>> rows_of(const Tensor& t) {
    std::vector<std::vector<double>> out(t.dim(0));
    for (std::size_t r = 0; r < t.dim(0); ++r)
        out[r].assign(t.data().begin() + r * t.dim(1), t.data().begin() + (r + 1) * t.dim(1));
    return out;
}

Tensor random_unit_rows(std::size_t b, std::size_t d, std::mt19937_64& rng, bool requires_grad = false) {
    auto t = oracle::random_tensor({b, d}, rng, -1.0, 1.0, false);
    auto v = t.data_mut();
    for (std::size_t r = 0; r < b; ++r) {
        double n = 0.0;
        for (std::size_t k = 0; k < d; ++k) n += v[r * d + k] * v[r * d + k];
        for (std::size_t k = 0; k < d; ++k) v[r * d + k] /= std::sqrt(n);
    }
    t.set_requires_grad(requires_grad);
    return t;
}

std::vector<int> random_labels(std::size_t b, int classes, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> u(0, classes - 1);
    std::vector<int> out(b);
    for (auto& l : out) l = u(rng);
    return out;
}

}  // namespace

TEST(CrossEntropy, PerfectPredictionIsZero) {
    std::vector<double> row(9, 0.0);
    row[4] = 1.0;
    const int y[] = {4};
    EXPECT_EQ(cross_entropy(probs_rows({row}), y).item(), 0.0);
}

TEST(CrossEntropy, UniformIsLogNine) {
    const int y[] = {0, 8};
    EXPECT_NEAR(cross_entropy(probs_rows({std::vector<double>(9, 1.0 / 9), std::vector<double>(9, 1.0 / 9)}), y).item(),
                std::log(9.0), 1e-12);
}

TEST(CrossEntropy, HandComputedBatch) {
    const int y[] = {0, 1};
    const auto p = probs_rows({{0.5, 0.5}, {0.75, 0.25}});
    EXPECT_NEAR(cross_entropy(p, y).item(), (std::log(2.0) + std::log(4.0)) / 2.0, 1e-12);
    EXPECT_NEAR(cross_entropy(p, y).item(), 1.0397, 1e-4);
}

TEST(CrossEntropy, LabelOutOfRange) {
    const int y[] = {9};
    try {
        cross_entropy(probs_rows({std::vector<double>(9, 1.0 / 9)}), y);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::label);
    }
}

TEST(SupCon, PairOfSameClassIsZero) {
    std::mt19937_64 rng(1);
    const int y[] = {3, 3};
    EXPECT_NEAR(supervised_contrastive(random_unit_rows(2, 5, rng), y, 0.5).item(), 0.0, 1e-15);
}

TEST(SupCon, HandDerivedThreeSampleValue) {
    const auto z = Tensor::from_data({3, 2}, {1, 0, 1, 0, 0, 1});
    const int y[] = {0, 0, 1};
    const double expected = 2.0 * std::log(1.0 + std::exp(-2.0)) / 3.0;
    EXPECT_NEAR(supervised_contrastive(z, y, 0.5).item(), expected, 1e-12);
    EXPECT_NEAR(supervised_contrastive(z, y, 0.5).item(), 0.0846, 1e-4);
}

TEST(SupCon, MatchesDoubleLoopOracle) {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t b = 2 + rng() % 15;
        const auto z = random_unit_rows(b, 7, rng);
        const auto y = random_labels(b, 4, rng);
        EXPECT_NEAR(supervised_contrastive(z, y, 0.5).item(), oracle::supcon_double_loop(rows_of(z), y, 0.5), 1e-6);
    }
}

TEST(SupCon, UnnormalizedRowsAreContractError) {
    const auto z = Tensor::from_data({2, 2}, {1, 1, 0, 1});
    const int y[] = {0, 0};
    try {
        supervised_contrastive(z, y, 0.5);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::contract);
    }
}

TEST(SupCon, InvariantUnderCommonRotation) {
    std::mt19937_64 rng(3);
    const auto z = random_unit_rows(8, 2, rng);
    const auto y = random_labels(8, 3, rng);
    const double th = 0.7;
    std::vector<double> rotated(16);
    for (std::size_t r = 0; r < 8; ++r) {
        const double a = z.data()[2 * r], b = z.data()[2 * r + 1];
        rotated[2 * r] = std::cos(th) * a - std::sin(th) * b;
        rotated[2 * r + 1] = std::sin(th) * a + std::cos(th) * b;
    }
    EXPECT_NEAR(supervised_contrastive(z, y, 0.5).item(),
                supervised_contrastive(Tensor::from_data({8, 2}, rotated), y, 0.5).item(), 1e-6);
}

TEST(SupCon, MovingPositivesTogetherLowersLoss) {
    std::mt19937_64 rng(4);
    const auto z = random_unit_rows(6, 4, rng, true);
    const std::vector<int> y = {0, 0, 1, 1, 2, 2};
    supervised_contrastive(z, y, 0.5).backward();
    // direction moving z0 toward its positive z1
    std::vector<double> dir(24, 0.0);
    for (std::size_t k = 0; k < 4; ++k) dir[k] = z.data()[4 + k] - z.data()[k];
    double directional = 0.0;
    for (std::size_t i = 0; i < 24; ++i) directional += z.grad()[i] * dir[i];
    EXPECT_LT(directional, 0.0);
}

TEST(SupCon, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    auto z = oracle::random_tensor({6, 3}, rng, -1.0, 1.0, true);
    const std::vector<int> y = {0, 1, 0, 1, 2, 0};
    EXPECT_LT(oracle::max_gradient_error([&] { return supervised_contrastive(l2_normalize(z, 1), y, 0.5); }, {z}), 1e-4);
}

namespace {

struct TinyModel {
    ModelConfig config = fixture::model_for(12, 3, 8);
    ModelState state;
    std::vector<WindowSample> samples;
    std::vector<const WindowSample*> batch;
    std::vector<int> labels;

    explicit TinyModel(std::size_t b, std::uint64_t seed = 6) {
        std::mt19937_64 rng(seed);
        state = init_model(config, seed);
        for (std::size_t i = 0; i < b; ++i) samples.push_back(fixture::random_window(config, rng, static_cast<int>(i % 3)));
        for (const auto& s : samples) {
            batch.push_back(&s);
            labels.push_back(s.label);
        }
    }
};

}  // namespace

TEST(HybridLoss, GammaZeroIsCrossEntropy) {
    TinyModel m(6);
    const auto out = forward(m.state, m.batch);
    const HybridLossConfig cfg{0.0, 0.5};
    EXPECT_EQ(hybrid_loss(out, m.labels, cfg).total.item(), cross_entropy(out.probs, m.labels).item());
}

TEST(HybridLoss, SingletonBatchIsCrossEntropyOnly) {
    TinyModel m(1);
    const auto out = forward(m.state, m.batch);
    const auto loss = hybrid_loss(out, m.labels, HybridLossConfig{});
    EXPECT_EQ(loss.contrastive, 0.0);
    EXPECT_EQ(loss.total.item(), cross_entropy(out.probs, m.labels).item());
}

TEST(HybridLoss, FullModelGradientMatchesFiniteDifferences) {
    TinyModel m(6);
    std::vector<Tensor> params;
    for (const auto& p : m.state.params) params.push_back(p.value);
    auto build = [&] {
        std::mt19937_64 dropout_rng(99);
        return hybrid_loss(forward_train(m.state, m.batch, dropout_rng), m.labels, HybridLossConfig{}).total;
    };
    std::mt19937_64 rng(7);
    const auto check = oracle::sampled_gradient_check(build, params, 120, rng);
    EXPECT_EQ(check.checked, 120u);
    EXPECT_LT(check.skipped, 30u);
    EXPECT_LT(check.worst, 1e-3);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    for (double g : {0.3, -7.0}) {
        auto theta = Tensor::from_data({1}, {2.0}, true);
        Adam opt({{"theta", theta}}, AdamConfig{0.01});
        scale(sum(theta), g).backward();
        opt.step();
        EXPECT_NEAR(theta.item(), 2.0 - 0.01 * (g > 0 ? 1 : -1), 1e-8);
    }
}

TEST(Adam, ZeroGradientLeavesParameters) {
    auto theta = Tensor::from_data({3}, {1.0, -2.0, 0.5}, true);
    Adam opt({{"theta", theta}});
    scale(sum(theta), 0.0).backward();
    opt.step();
    opt.step();
    EXPECT_EQ(std::vector<double>(theta.data().begin(), theta.data().end()), (std::vector<double>{1.0, -2.0, 0.5}));
}

TEST(Adam, ConvergesOnQuadratic) {
    auto theta = Tensor::from_data({1}, {1.0}, true);
    Adam opt({{"theta", theta}}, AdamConfig{0.1});
    for (int i = 0; i < 200; ++i) {
        opt.zero_grad();
        auto t = reshape(theta, {1, 1});
        sum(matmul(t, t)).backward();
        opt.step();
    }
    EXPECT_LT(std::abs(theta.item()), 1e-2);
}

TEST(Adam, NonFiniteGradientNamesParameter) {
    auto theta = Tensor::from_data({1}, {1.0}, true);
    Adam opt({{"encoder.conv1.weight", theta}});
    scale(sum(theta), std::numeric_limits<double>::infinity()).backward();
    try {
        opt.step();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric);
        EXPECT_NE(std::string(e.what()).find("encoder.conv1.weight"), std::string::npos);
    }
    EXPECT_EQ(theta.item(), 1.0);
}

TEST(Evaluate, ConfusionMatchesRecount) {
    const auto c = fixture::model_for(12, 3, 8);
    auto state = init_model(c, 8);
    std::mt19937_64 rng(9);
    std::vector<WindowSample> samples;
    for (int i = 0; i < 100; ++i) samples.push_back(fixture::random_window(c, rng, static_cast<int>(rng() % 9)));
    std::vector<const WindowSample*> ptrs;
    for (const auto& s : samples) ptrs.push_back(&s);
    const auto ev = evaluate(state, ptrs, nullptr, 7);

    std::vector<std::vector<std::size_t>> counts(9, std::vector<std::size_t>(9, 0));
    std::size_t correct = 0;
    for (const auto& s : samples) {
        const WindowSample* one[] = {&s};
        const auto out = forward(state, one);
        const auto p = out.probs.data();
        const int pred = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        ++counts[s.label][pred];
        correct += pred == s.label;
    }
    EXPECT_EQ(ev.counts, counts);
    EXPECT_DOUBLE_EQ(ev.accuracy, correct / 100.0);

    // accuracy is the class-frequency weighted mean of the diagonal
    const auto pct = ev.confusion_percent();
    double weighted = 0.0;
    for (std::size_t k = 0; k < 9; ++k) {
        const auto n = std::accumulate(counts[k].begin(), counts[k].end(), std::size_t{0});
        weighted += pct[k][k] / 100.0 * static_cast<double>(n) / 100.0;
        if (n > 0) EXPECT_NEAR(std::accumulate(pct[k].begin(), pct[k].end(), 0.0), 100.0, 1e-9);
    }
    EXPECT_NEAR(weighted, ev.accuracy, 1e-12);
}

TEST(Evaluate, AllCorrectIsDiagonal) {
    const auto c = fixture::model_for(12, 3, 8);
    const auto state = init_model(c, 10);
    std::mt19937_64 rng(11);
    std::vector<WindowSample> samples;
    for (int i = 0; i < 30; ++i) samples.push_back(fixture::random_window(c, rng));
    std::vector<const WindowSample*> ptrs;
    for (const auto& s : samples) ptrs.push_back(&s);
    const auto first = evaluate(state, ptrs);
    for (std::size_t i = 0; i < samples.size(); ++i) samples[i].label = first.predictions[i];
    const auto ev = evaluate(state, ptrs);
    EXPECT_EQ(ev.accuracy, 1.0);
    const auto pct = ev.confusion_percent();
    for (std::size_t r = 0; r < 9; ++r)
        for (std::size_t k = 0; k < 9; ++k) {
            const bool present = std::accumulate(ev.counts[r].begin(), ev.counts[r].end(), std::size_t{0}) > 0;
            EXPECT_EQ(pct[r][k], (r == k && present) ? 100.0 : 0.0);
        }
}

namespace {

TrainConfig quick_train(std::size_t epochs) {
    TrainConfig t;
    t.max_epochs = epochs;
    t.batch_size = 16;
    t.seed = 12;
    return t;
}

}  // namespace

TEST(Train, EmptySplitIsConfigError) {
    const auto data = fixture::synthetic_set(16, 3, 8, 2, 1, 1);
    DatasetSplit split;
    split.train = {0, 1};
    try {
        train(data, split, fixture::model_for(16, 3, 8), quick_train(1), HybridLossConfig{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
    }
}

TEST(Train, ScheduleFollowsPatienceRules) {
    const auto data = fixture::synthetic_set(16, 3, 8, 3, 3, 2);
    const auto split = split_for_participant(data, 0, 3);
    auto cfg = quick_train(40);
    cfg.patience = 4;
    cfg.lr_patience = 2;
    std::vector<EpochRecord> seen;
    const auto result = train(data, split, fixture::model_for(16, 3, 8), cfg, HybridLossConfig{},
                              [&](const EpochRecord& r) { seen.push_back(r); });
    const auto& rep = result.report;
    ASSERT_EQ(seen.size(), rep.epochs_run);
    ASSERT_LE(rep.epochs_run, 40u);

    std::size_t bad = 0, since = 0, halvings = 0;
    double lr = cfg.lr, best = std::numeric_limits<double>::infinity();
    for (const auto& r : rep.epochs) {
        EXPECT_DOUBLE_EQ(r.lr, lr);
        EXPECT_EQ(r.improved, r.val_loss < best - cfg.min_delta);
        if (r.improved) {
            best = r.val_loss;
            bad = since = 0;
        } else {
            ++bad;
            if (++since >= cfg.lr_patience) {
                lr /= 2;
                ++halvings;
                since = 0;
            }
        }
        if (r.epoch < rep.epochs_run) EXPECT_LT(bad, cfg.patience);
    }
    EXPECT_EQ(halvings, rep.lr_halvings);
    if (rep.epochs_run < 40) EXPECT_EQ(bad, cfg.patience);
    // the returned state is the best one observed
    EXPECT_NEAR(rep.best_val_loss, best, 1e-4);
    EXPECT_EQ(rep.epochs[rep.best_epoch - 1].val_loss, best);
}

TEST(Train, MonotoneImprovementNeverHalves) {
    const auto data = fixture::synthetic_set(16, 3, 8, 3, 3, 2);
    const auto split = split_for_participant(data, 0, 3);
    const auto result = train(data, split, fixture::model_for(16, 3, 8), quick_train(6), HybridLossConfig{});
    bool all_improved = true;
    for (const auto& r : result.report.epochs) all_improved &= r.improved;
    if (all_improved) EXPECT_EQ(result.report.lr_halvings, 0u);
    for (const auto& r : result.report.epochs) {
        if (!r.improved) break;
        EXPECT_EQ(r.lr, 3e-3);
    }
}

TEST(Train, IdenticalSeedsGiveIdenticalReports) {
    const auto data = fixture::synthetic_set(16, 3, 8, 3, 3, 4);
    const auto split = split_for_participant(data, 1, 5);
    auto cfg = quick_train(3);
    cfg.augment = true;
    const auto a = train(data, split, fixture::model_for(16, 3, 8), cfg, HybridLossConfig{});
    const auto b = train(data, split, fixture::model_for(16, 3, 8), cfg, HybridLossConfig{});
    EXPECT_EQ(to_json(a.report), to_json(b.report));
    EXPECT_EQ(encode_checkpoint(a.state), encode_checkpoint(b.state));
    EXPECT_TRUE(a.report.has_test);
    EXPECT_EQ(a.report.test_count, 27u);
}

TEST(Train, CheckpointReproducesReportedTestAccuracy) {
    const auto data = fixture::synthetic_set(16, 3, 8, 3, 3, 4);
    const auto split = split_for_participant(data, 2, 5);
    const auto res = train(data, split, fixture::model_for(16, 3, 8), quick_train(3), HybridLossConfig{});
    const auto reloaded = decode_checkpoint(encode_checkpoint(res.state));
    std::vector<const WindowSample*> test;
    for (auto i : split.test) test.push_back(&data[i]);
    EXPECT_EQ(evaluate(reloaded, test).accuracy, res.report.test_accuracy);
}

TEST(Train, OverfitsFortyFiveSamples) {
    const auto data = fixture::synthetic_set(16, 3, 8, 5, 1, 7);
    ASSERT_EQ(data.size(), 45u);
    auto cfg = quick_train(200);
    cfg.early_stopping = false;
    cfg.batch_size = 32;
    cfg.target_accuracy = 0.99;
    // validation is the training set here, so the target is train accuracy
    const auto res = train(data, fixture::everything(data.size()), fixture::model_for(16, 3, 8), cfg, HybridLossConfig{});
    ASSERT_LE(res.report.epochs_run, 200u);
    EXPECT_GE(res.report.epochs.back().val_accuracy, 0.99);
}

TEST(Train, StopsAtTargetAccuracy) {
    const auto data = fixture::synthetic_set(16, 3, 8, 3, 3, 5);
    auto cfg = quick_train(6);
    cfg.early_stopping = false;
    cfg.target_accuracy = 1e-9;  // any epoch with one correct validation sample
    const auto split = lopo_splits(data, 1).front();
    const auto res = train(data, split, fixture::model_for(16, 3, 8), cfg, HybridLossConfig{});
    std::size_t first = 0;
    for (const auto& e : res.report.epochs)
        if (first == 0 && e.val_accuracy >= cfg.target_accuracy) first = e.epoch;
    EXPECT_EQ(res.report.epochs_run, first == 0 ? 6u : first);
}

TEST(Lopo, AggregatesFoldReports) {
    const auto data = fixture::synthetic_set(16, 3, 8, 5, 1, 8);
    std::size_t folds_seen = 0;
    const auto res = lopo_run(data, fixture::model_for(16, 3, 8), quick_train(2), HybridLossConfig{},
                              [&](std::size_t, const TrainReport&) { ++folds_seen; });
    ASSERT_EQ(res.reports.size(), 5u);
    EXPECT_EQ(folds_seen, 5u);
    double mean = 0.0, mx = 0.0;
    std::set<int> held;
    for (const auto& r : res.reports) {
        mean += r.test_accuracy / 5.0;
        mx = std::max(mx, r.test_accuracy);
        held.insert(r.held_out_participant);
    }
    EXPECT_EQ(held.size(), 5u);
    EXPECT_NEAR(res.mean_test_accuracy, mean, 1e-12);
    EXPECT_EQ(res.max_test_accuracy, mx);
    EXPECT_GE(res.max_test_accuracy + 1e-12, res.mean_test_accuracy);
}
