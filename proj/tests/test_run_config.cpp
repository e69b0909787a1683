#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "radarfuse/run_config.hpp"
#include "support/errors.hpp"

using namespace radarfuse;
using testing_support::throws_kind;

TEST(RunConfig, DefaultsResolveToLibraryDefaults) {
    const RunConfig c;
    EXPECT_EQ(c.seed(), 42u);
    EXPECT_EQ(c.model(5, 480, 30), ModelConfig{});
    const auto t = c.train(false);
    const TrainConfig d;
    EXPECT_EQ(t.lr, d.lr);
    EXPECT_EQ(t.max_epochs, d.max_epochs);
    EXPECT_EQ(t.patience, d.patience);
    EXPECT_EQ(t.batch_size, d.batch_size);
    EXPECT_FALSE(t.augment);
    EXPECT_EQ(c.loss().gamma, HybridLossConfig{}.gamma);
    EXPECT_EQ(c.schemes().size(), 9u);
    EXPECT_TRUE(std::isinf(c.snr_grid().back()));
}

TEST(RunConfig, AugmentAutoFollowsImbalance) {
    RunConfig c;
    EXPECT_TRUE(c.train(true).augment);
    EXPECT_FALSE(c.train(false).augment);
    c.set("train.augment", "off");
    EXPECT_FALSE(c.train(true).augment);
    c.set("train.augment", "on");
    EXPECT_TRUE(c.train(false).augment);
}

TEST(RunConfig, UnknownKeyAndBadValuesRejected) {
    RunConfig c;
    EXPECT_TRUE(throws_kind([&] { c.set("train.lrate", "1"); }, ErrorKind::config));
    EXPECT_TRUE(throws_kind([&] { c.set("train.lr", "fast"); }, ErrorKind::config));
    EXPECT_TRUE(throws_kind([&] { c.set("train.lr", "inf"); }, ErrorKind::config));
    EXPECT_TRUE(throws_kind([&] { c.set("train.max_epochs", "-3"); }, ErrorKind::config));
    EXPECT_TRUE(throws_kind([&] { c.set("model.pool_channels", "max"); }, ErrorKind::config));
    EXPECT_TRUE(throws_kind([&] { c.set("data.imbalanced", "maybe"); }, ErrorKind::config));
    EXPECT_TRUE(throws_kind([&] { c.set("compress.encoder", "5by4"); }, ErrorKind::config));
    EXPECT_TRUE(throws_kind([&] { c.set("compress.snr_db", "-inf"); }, ErrorKind::config));
    EXPECT_TRUE(throws_kind([&] { c.set("compress.seeds", ""); }, ErrorKind::config));
    // a rejected value leaves the previous one in place for scalar keys
    EXPECT_EQ(c.get("train.lr"), "0.003");
}

TEST(RunConfig, TextParsingWithCommentsAndLineNumbers) {
    RunConfig c;
    c.load_text("# comment\n\n  train.lr = 0.01  # trailing\nmodel.hidden=32\r\n", "t");
    EXPECT_EQ(c.real("train.lr"), 0.01);
    EXPECT_EQ(c.uinteger("model.hidden"), 32u);
    try {
        c.load_text("seed = 1\nbogus\n", "file.cfg");
        FAIL() << "expected config error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::config);
        EXPECT_NE(std::string(e.what()).find("file.cfg:2"), std::string::npos);
    }
}

TEST(RunConfig, DumpRoundTrips) {
    RunConfig a;
    a.set("seed", "7");
    a.set("compress.encoder", "5x4");
    a.set("compress.downsample", "20");
    a.set("data.scenario", "geometry");
    RunConfig b;
    b.load_text(a.dump());
    EXPECT_EQ(a.dump(), b.dump());
    const auto s = b.schemes();
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[0].setting(), "5x4");
    EXPECT_EQ(s[1].setting(), "20");
}

TEST(RunConfig, FileLoadAndMissingFile) {
    const auto path = std::filesystem::temp_directory_path() / "rf_run_config_test.cfg";
    {
        std::ofstream out(path);
        out << "data.nodes = 3\n";
    }
    RunConfig c;
    c.load_file(path);
    EXPECT_EQ(c.synthesis().radar.nodes.size(), 3u);
    std::filesystem::remove(path);
    EXPECT_TRUE(throws_kind([&] { c.load_file(path); }, ErrorKind::io));
}
