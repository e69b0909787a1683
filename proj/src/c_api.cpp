#include "radarfuse/radarfuse.h"

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <new>
#include <sstream>
#include <map>
#include <memory>
#include <string>

#include "json.hpp"

#include "radarfuse/comms.hpp"
#include "radarfuse/error.hpp"
#include "radarfuse/interpret.hpp"
#include "radarfuse/learning.hpp"
#include "radarfuse/model.hpp"
#include "radarfuse/radar.hpp"
#include "radarfuse/recording_io.hpp"
#include "radarfuse/run_config.hpp"

using namespace radarfuse;

struct rf_config {
    RunConfig cfg;
};

struct rf_dataset {
    Recording recording;
    std::vector<WindowSample> samples;
};

struct rf_model {
    ModelState state;
};

namespace {

thread_local std::string g_last_error;

rf_status status_for(ErrorKind kind) {
    return kind == ErrorKind::numeric || kind == ErrorKind::degenerate ? RF_E_NUMERIC : RF_E_INPUT;
}

template <class F>
rf_status guarded(F&& fn) {
    try {
        g_last_error.clear();
        fn();
        return RF_OK;
    } catch (const Error& e) {
        g_last_error = std::string(to_string(e.kind())) + " error: " + e.what();
        return status_for(e.kind());
    } catch (const nlohmann::json::exception& e) {
        g_last_error = std::string("json error: ") + e.what();
        return RF_E_INTERNAL;
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return RF_E_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return RF_E_INTERNAL;
    }
}

void require(const void* p, const char* what) {
    if (p == nullptr) fail(ErrorKind::contract, std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
    auto* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out == nullptr) throw std::bad_alloc();
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

std::vector<const WindowSample*> pick(const std::vector<WindowSample>& samples, const std::vector<std::size_t>& idx) {
    std::vector<const WindowSample*> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(&samples.at(i));
    return out;
}

bool classes_imbalanced(const std::vector<WindowSample>& samples) {
    std::array<std::size_t, kActivityClasses> counts{};
    for (const auto& s : samples) ++counts.at(static_cast<std::size_t>(s.label));
    std::size_t lo = SIZE_MAX, hi = 0;
    for (auto c : counts) {
        if (c == 0) continue;
        lo = std::min(lo, c);
        hi = std::max(hi, c);
    }
    return hi > lo;
}

void require_samples(const rf_dataset* ds) {
    require(ds, "dataset");
    if (ds->samples.empty()) fail(ErrorKind::contract, "dataset has no labelled windows");
}

ModelConfig model_config(const RunConfig& cfg, const rf_dataset& ds) {
    const auto& s = ds.samples.front();
    return cfg.model(s.node_count(), s.fast_bins, s.window);
}

DatasetSplit held_out_split(const RunConfig& cfg, const rf_dataset& ds) {
    return split_for_participant(ds.samples, static_cast<int>(cfg.integer("train.participant")), cfg.seed());
}

void check_model_matches(const ModelState& state, const rf_dataset& ds) {
    const auto& s = ds.samples.front();
    const auto& c = state.config;
    if (c.nodes != s.node_count() || c.fast_bins != s.fast_bins || c.window != s.window) {
        fail(ErrorKind::dimension, "model expects " + std::to_string(c.nodes) + " nodes x " +
                                       std::to_string(c.fast_bins) + " bins x " + std::to_string(c.window) +
                                       " pulses, dataset has " + std::to_string(s.node_count()) + " x " +
                                       std::to_string(s.fast_bins) + " x " + std::to_string(s.window));
    }
}

std::map<std::string, std::string> config_map(const RunConfig& cfg) {
    std::map<std::string, std::string> out;
    for (const auto& e : cfg.entries()) out[e.key] = e.value;
    return out;
}

void emit(rf_progress_fn progress, void* user, const std::string& line) {
    if (progress != nullptr) progress(line.c_str(), user);
}

std::string epoch_line(const EpochRecord& e) {
    std::ostringstream os;
    os.precision(4);
    os << "epoch " << e.epoch << " train_loss " << e.train_loss << " train_acc " << e.train_accuracy << " val_loss "
       << e.val_loss << " val_acc " << e.val_accuracy << " lr " << e.lr << (e.improved ? " *" : "");
    return os.str();
}

}  // namespace

extern "C" {

const char* rf_version(void) { return "1.0.0"; }

const char* rf_last_error(void) { return g_last_error.c_str(); }

void rf_string_free(char* s) { std::free(s); }

rf_status rf_config_new(rf_config** out) {
    return guarded([&] {
        require(out, "out");
        *out = new rf_config();
    });
}

void rf_config_free(rf_config* cfg) { delete cfg; }

rf_status rf_config_set(rf_config* cfg, const char* key, const char* value) {
    return guarded([&] {
        require(cfg, "config");
        require(key, "key");
        require(value, "value");
        cfg->cfg.set(key, value);
    });
}

rf_status rf_config_get(const rf_config* cfg, const char* key, char** value) {
    return guarded([&] {
        require(cfg, "config");
        require(key, "key");
        require(value, "value");
        *value = dup_string(cfg->cfg.get(key));
    });
}

rf_status rf_config_load_file(rf_config* cfg, const char* path) {
    return guarded([&] {
        require(cfg, "config");
        require(path, "path");
        cfg->cfg.load_file(path);
    });
}

rf_status rf_config_dump(const rf_config* cfg, char** text) {
    return guarded([&] {
        require(cfg, "config");
        require(text, "text");
        *text = dup_string(cfg->cfg.dump());
    });
}

rf_status rf_config_help(char** text) {
    return guarded([&] {
        require(text, "text");
        const RunConfig defaults;
        std::size_t width = 0;
        for (const auto& e : defaults.entries()) width = std::max(width, e.key.size() + e.value.size() + 3);
        std::string out;
        for (const auto& e : defaults.entries()) {
            std::string head = e.key + " = " + e.value;
            head.resize(width + 2, ' ');
            out += "  " + head + e.help + "\n";
        }
        *text = dup_string(out);
    });
}

rf_status rf_dataset_generate(const rf_config* cfg, rf_dataset** out) {
    return guarded([&] {
        require(cfg, "config");
        require(out, "out");
        auto ds = std::make_unique<rf_dataset>();
        ds->recording = synthesize_recording(cfg->cfg.synthesis());
        ds->samples = windows(ds->recording);
        *out = ds.release();
    });
}

rf_status rf_dataset_load(const char* path, rf_dataset** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        auto ds = std::make_unique<rf_dataset>();
        ds->recording = load_recording(path);
        ds->samples = windows(ds->recording);
        *out = ds.release();
    });
}

rf_status rf_dataset_save(const rf_dataset* ds, const char* path) {
    return guarded([&] {
        require(ds, "dataset");
        require(path, "path");
        save_recording(ds->recording, path);
    });
}

rf_status rf_dataset_info_get(const rf_dataset* ds, rf_dataset_info* info) {
    return guarded([&] {
        require(ds, "dataset");
        require(info, "info");
        *info = rf_dataset_info{};
        info->nodes = ds->recording.node_count();
        info->fast_bins = ds->recording.fast_bins;
        info->participants = ds->recording.participants;
        info->samples = ds->samples.size();
        if (!ds->samples.empty()) info->window = ds->samples.front().window;
        for (const auto& s : ds->samples) ++info->class_counts[s.label];
    });
}

void rf_dataset_free(rf_dataset* ds) { delete ds; }

rf_status rf_model_load(const char* path, rf_model** out) {
    return guarded([&] {
        require(path, "path");
        require(out, "out");
        *out = new rf_model{load_checkpoint(path)};
    });
}

rf_status rf_model_save(const rf_model* model, const char* path) {
    return guarded([&] {
        require(model, "model");
        require(path, "path");
        save_checkpoint(model->state, path);
    });
}

rf_status rf_model_parameter_count(const rf_model* model, size_t* count) {
    return guarded([&] {
        require(model, "model");
        require(count, "count");
        *count = parameter_count(model->state);
    });
}

void rf_model_free(rf_model* model) { delete model; }

rf_status rf_train(const rf_config* cfg, const rf_dataset* ds, rf_progress_fn progress, void* user, rf_model** model,
                   char** report_json) {
    return guarded([&] {
        require(cfg, "config");
        require_samples(ds);
        require(model, "model");
        require(report_json, "report_json");
        const auto& rc = cfg->cfg;
        const auto split = held_out_split(rc, *ds);
        auto result = train(ds->samples, split, model_config(rc, *ds), rc.train(classes_imbalanced(ds->samples)),
                            rc.loss(), [&](const EpochRecord& e) { emit(progress, user, epoch_line(e)); });
        result.report.config = config_map(rc);
        auto json = dup_string(to_json(result.report));
        *model = new rf_model{std::move(result.state)};
        *report_json = json;
    });
}

rf_status rf_evaluate(const rf_config* cfg, const rf_model* model, const rf_dataset* ds, char** report_json) {
    return guarded([&] {
        require(cfg, "config");
        require(model, "model");
        require_samples(ds);
        require(report_json, "report_json");
        check_model_matches(model->state, *ds);
        const auto split = held_out_split(cfg->cfg, *ds);
        const auto test = pick(ds->samples, split.test);
        const auto ev = evaluate(model->state, test);
        const nlohmann::json j = {{"held_out_participant", split.held_out_participant},
                                  {"test_count", ev.count},
                                  {"test_accuracy", ev.accuracy},
                                  {"confusion_counts", ev.counts},
                                  {"confusion_percent", ev.confusion_percent()},
                                  {"parameter_count", parameter_count(model->state)}};
        *report_json = dup_string(j.dump(2));
    });
}

rf_status rf_lopo(const rf_config* cfg, const rf_dataset* ds, rf_progress_fn progress, void* user,
                  char** report_json) {
    return guarded([&] {
        require(cfg, "config");
        require_samples(ds);
        require(report_json, "report_json");
        const auto& rc = cfg->cfg;
        const auto result =
            lopo_run(ds->samples, model_config(rc, *ds), rc.train(classes_imbalanced(ds->samples)), rc.loss(),
                     [&](std::size_t fold, const TrainReport& r) {
                         std::ostringstream os;
                         os.precision(4);
                         os << "fold " << fold << " participant " << r.held_out_participant << " test_acc "
                            << r.test_accuracy << " epochs " << r.epochs_run;
                         emit(progress, user, os.str());
                     });
        auto j = nlohmann::json::parse(to_json(result));
        j["config"] = config_map(rc);
        *report_json = dup_string(j.dump(2));
    });
}

rf_status rf_compress(const rf_config* cfg, const rf_dataset* ds, rf_progress_fn progress, void* user,
                      char** rows_csv, char** summary_csv) {
    return guarded([&] {
        require(cfg, "config");
        require_samples(ds);
        require(rows_csv, "rows_csv");
        require(summary_csv, "summary_csv");
        const auto& rc = cfg->cfg;
        const auto schemes = rc.schemes();
        if (schemes.empty()) fail(ErrorKind::config, "compress: no encoder or downsample schemes configured");
        const auto snr = rc.snr_grid();
        const auto seeds = rc.sweep_seeds();
        const auto split = held_out_split(rc, *ds);
        const auto base = model_config(rc, *ds);
        const auto train_cfg = rc.train(classes_imbalanced(ds->samples));
        std::vector<TrainedScheme> models;
        for (const auto& scheme : schemes) {
            auto trained = train_schemes(ds->samples, split, base, train_cfg, rc.loss(), {&scheme, 1});
            std::ostringstream os;
            os.precision(4);
            os << "trained " << scheme.kind_name() << " " << scheme.setting() << " val_acc "
               << trained.front().report.val_accuracy << " epochs " << trained.front().report.epochs_run;
            emit(progress, user, os.str());
            models.push_back(std::move(trained.front()));
        }
        const auto test = pick(ds->samples, split.test);
        const auto sweep = snr_sweep(models, snr, seeds, test);
        auto rows = dup_string(to_csv(std::span<const SweepRow>(sweep.rows)));
        try {
            *summary_csv = dup_string(to_csv(std::span<const SweepSummary>(sweep.summary)));
        } catch (...) {
            std::free(rows);
            throw;
        }
        *rows_csv = rows;
    });
}

rf_status rf_ablate(const rf_config* cfg, const rf_model* model, const rf_dataset* ds, char** csv,
                    char** summary_json) {
    return guarded([&] {
        require(cfg, "config");
        require(model, "model");
        require_samples(ds);
        require(csv, "csv");
        require(summary_json, "summary_json");
        check_model_matches(model->state, *ds);
        const auto split = held_out_split(cfg->cfg, *ds);
        const auto test = pick(ds->samples, split.test);
        const auto study = importance_ablation_study(model->state, test, cfg->cfg.seed());
        const nlohmann::json j = {{"held_out_participant", split.held_out_participant},
                                  {"samples", study.samples},
                                  {"baseline_accuracy", study.baseline},
                                  {"importance", study.importance.mean},
                                  {"argmax_counts", study.importance.argmax_counts},
                                  {"spearman_importance_vs_zero_drop", study.spearman_zero},
                                  {"spearman_importance_vs_random_drop", study.spearman_random}};
        auto text = dup_string(to_csv(study));
        try {
            *summary_json = dup_string(j.dump(2));
        } catch (...) {
            std::free(text);
            throw;
        }
        *csv = text;
    });
}

rf_status rf_embed(const rf_model* model, const rf_dataset* ds, char** csv) {
    return guarded([&] {
        require(model, "model");
        require_samples(ds);
        require(csv, "csv");
        check_model_matches(model->state, *ds);
        const std::size_t dim = model->state.config.embedding_size();
        std::ostringstream os;
        os.precision(9);
        os << "sample,participant,label";
        for (std::size_t k = 0; k < dim; ++k) os << ",e" << k;
        os << '\n';
        NoGradGuard no_grad;
        constexpr std::size_t kBatch = 32;
        for (std::size_t at = 0; at < ds->samples.size(); at += kBatch) {
            std::vector<const WindowSample*> batch;
            for (std::size_t i = at; i < std::min(at + kBatch, ds->samples.size()); ++i)
                batch.push_back(&ds->samples[i]);
            const auto out = forward(model->state, batch);
            const auto e = out.embedding.data();
            for (std::size_t b = 0; b < batch.size(); ++b) {
                os << at + b << ',' << batch[b]->participant << ',' << batch[b]->label;
                for (std::size_t k = 0; k < dim; ++k) os << ',' << e[b * dim + k];
                os << '\n';
            }
        }
        *csv = dup_string(os.str());
    });
}

}  // extern "C"
