#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <string>

#include "json.hpp"
#include "radarfuse/radarfuse.h"

namespace {

struct Owned {
    char* p = nullptr;
    ~Owned() { rf_string_free(p); }
    std::string str() const { return p ? p : ""; }
};

rf_config* small_config() {
    rf_config* cfg = nullptr;
    EXPECT_EQ(rf_config_new(&cfg), RF_OK);
    const char* kv[][2] = {{"data.nodes", "3"},         {"data.fast_bins", "24"},     {"data.window", "8"},
                           {"data.participants", "3"},  {"data.samples_per_class", "2"}, {"train.max_epochs", "2"},
                           {"compress.encoder", "5x4"}, {"compress.downsample", "2"},  {"compress.snr_db", "0,inf"},
                           {"compress.seeds", "1,2"}};
    for (auto& p : kv) EXPECT_EQ(rf_config_set(cfg, p[0], p[1]), RF_OK) << p[0];
    return cfg;
}

}  // namespace

TEST(CApi, ConfigErrorsMapToInputStatus) {
    rf_config* cfg = nullptr;
    ASSERT_EQ(rf_config_new(&cfg), RF_OK);
    EXPECT_EQ(rf_config_set(cfg, "no.such.key", "1"), RF_E_INPUT);
    EXPECT_NE(std::string(rf_last_error()).find("no.such.key"), std::string::npos);
    EXPECT_EQ(rf_config_set(cfg, "seed", "9"), RF_OK);
    EXPECT_STREQ(rf_last_error(), "");
    Owned v;
    ASSERT_EQ(rf_config_get(cfg, "seed", &v.p), RF_OK);
    EXPECT_EQ(v.str(), "9");
    EXPECT_EQ(rf_config_load_file(cfg, "/nonexistent/run.cfg"), RF_E_INPUT);
    EXPECT_EQ(rf_config_set(nullptr, "seed", "1"), RF_E_INPUT);
    rf_config_free(cfg);
}

TEST(CApi, DatasetRoundTripThroughFile) {
    rf_config* cfg = small_config();
    rf_dataset* ds = nullptr;
    ASSERT_EQ(rf_dataset_generate(cfg, &ds), RF_OK) << rf_last_error();
    rf_dataset_info info{};
    ASSERT_EQ(rf_dataset_info_get(ds, &info), RF_OK);
    EXPECT_EQ(info.nodes, 3u);
    EXPECT_EQ(info.fast_bins, 24u);
    EXPECT_EQ(info.window, 8u);
    EXPECT_EQ(info.samples, 9u * 3u * 2u);
    for (auto c : info.class_counts) EXPECT_EQ(c, 6u);

    const auto path = (std::filesystem::temp_directory_path() / "rf_capi_test.rdr").string();
    ASSERT_EQ(rf_dataset_save(ds, path.c_str()), RF_OK);
    rf_dataset* back = nullptr;
    ASSERT_EQ(rf_dataset_load(path.c_str(), &back), RF_OK);
    rf_dataset_info info2{};
    rf_dataset_info_get(back, &info2);
    EXPECT_EQ(info2.samples, info.samples);
    std::filesystem::remove(path);
    EXPECT_EQ(rf_dataset_load(path.c_str(), &back), RF_E_INPUT);
    rf_dataset_free(back);
    rf_dataset_free(ds);
    rf_config_free(cfg);
}

TEST(CApi, TrainEvaluateAblateEmbed) {
    rf_config* cfg = small_config();
    rf_dataset* ds = nullptr;
    ASSERT_EQ(rf_dataset_generate(cfg, &ds), RF_OK);
    int lines = 0;
    rf_model* model = nullptr;
    Owned report;
    ASSERT_EQ(rf_train(cfg, ds, [](const char*, void* u) { ++*static_cast<int*>(u); }, &lines, &model, &report.p),
              RF_OK)
        << rf_last_error();
    EXPECT_EQ(lines, 2);
    const auto tj = nlohmann::json::parse(report.str());
    EXPECT_EQ(tj["epochs_run"], 2);
    EXPECT_EQ(tj["config"]["data.nodes"], "3");

    // eval on the same split reproduces the training report's test accuracy
    Owned eval;
    ASSERT_EQ(rf_evaluate(cfg, model, ds, &eval.p), RF_OK) << rf_last_error();
    const auto ej = nlohmann::json::parse(eval.str());
    EXPECT_EQ(ej["test_accuracy"].get<double>(), tj["test_accuracy"].get<double>());
    EXPECT_EQ(ej["test_count"], tj["test_count"]);

    // checkpoint round trip keeps predictions
    const auto path = (std::filesystem::temp_directory_path() / "rf_capi_model.rfm").string();
    ASSERT_EQ(rf_model_save(model, path.c_str()), RF_OK);
    rf_model* loaded = nullptr;
    ASSERT_EQ(rf_model_load(path.c_str(), &loaded), RF_OK);
    Owned eval2;
    ASSERT_EQ(rf_evaluate(cfg, loaded, ds, &eval2.p), RF_OK);
    EXPECT_EQ(eval2.str(), eval.str());
    std::filesystem::remove(path);
    size_t params = 0;
    ASSERT_EQ(rf_model_parameter_count(loaded, &params), RF_OK);
    EXPECT_EQ(params, tj["parameter_count"].get<size_t>());

    Owned csv, summary;
    ASSERT_EQ(rf_ablate(cfg, model, ds, &csv.p, &summary.p), RF_OK) << rf_last_error();
    const auto s = csv.str();
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + 1 + 2 * 3);
    EXPECT_TRUE(nlohmann::json::parse(summary.str()).contains("spearman_importance_vs_zero_drop"));

    Owned emb;
    ASSERT_EQ(rf_embed(model, ds, &emb.p), RF_OK);
    const auto e = emb.str();
    EXPECT_EQ(std::count(e.begin(), e.end(), '\n'), 1 + 54);

    // a model for another geometry is a dimension (input) error
    rf_config_set(cfg, "data.nodes", "4");
    rf_dataset* other = nullptr;
    ASSERT_EQ(rf_dataset_generate(cfg, &other), RF_OK);
    Owned bad;
    EXPECT_EQ(rf_evaluate(cfg, model, other, &bad.p), RF_E_INPUT);
    EXPECT_EQ(bad.p, nullptr);

    rf_dataset_free(other);
    rf_model_free(loaded);
    rf_model_free(model);
    rf_dataset_free(ds);
    rf_config_free(cfg);
}

TEST(CApi, CompressProducesRowsAndSummary) {
    rf_config* cfg = small_config();
    rf_dataset* ds = nullptr;
    ASSERT_EQ(rf_dataset_generate(cfg, &ds), RF_OK);
    Owned rows, summary;
    ASSERT_EQ(rf_compress(cfg, ds, nullptr, nullptr, &rows.p, &summary.p), RF_OK) << rf_last_error();
    const auto r = rows.str(), s = summary.str();
    EXPECT_EQ(std::count(r.begin(), r.end(), '\n'), 1 + 2 * 2 * 2);  // schemes x snr x seeds
    EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 1 + 2 * 2);
    rf_dataset_free(ds);
    rf_config_free(cfg);
}

TEST(CApi, HeldOutParticipantOutOfRangeIsInputError) {
    rf_config* cfg = small_config();
    rf_config_set(cfg, "train.participant", "7");
    rf_dataset* ds = nullptr;
    ASSERT_EQ(rf_dataset_generate(cfg, &ds), RF_OK);
    rf_model* model = nullptr;
    Owned report;
    EXPECT_EQ(rf_train(cfg, ds, nullptr, nullptr, &model, &report.p), RF_E_INPUT);
    EXPECT_EQ(model, nullptr);
    rf_dataset_free(ds);
    rf_config_free(cfg);
}
