// Command-line front end. Talks to the library exclusively through the C API.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "radarfuse/radarfuse.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;

// Carries a library status out of a command body.
struct Failure {
    rf_status status;
    std::string message;
};

void check(rf_status st, const std::string& what) {
    if (st != RF_OK) throw Failure{st, what + ": " + rf_last_error()};
}

struct Str {
    char* p = nullptr;
    ~Str() { rf_string_free(p); }
    Str() = default;
    Str(const Str&) = delete;
    Str& operator=(const Str&) = delete;
};

template <class T, void (*Free)(T*)>
struct Handle {
    T* p = nullptr;
    ~Handle() { Free(p); }
    Handle() = default;
    Handle(const Handle&) = delete;
    Handle& operator=(const Handle&) = delete;
};
using Config = Handle<rf_config, rf_config_free>;
using Dataset = Handle<rf_dataset, rf_dataset_free>;
using Model = Handle<rf_model, rf_model_free>;

struct Options {
    std::string config_file;
    std::optional<std::string> seed;
    std::string out = "runs";
    std::vector<std::string> overrides;
    std::string data;
    std::string checkpoint;
    bool quiet = false;
};

std::string config_value(const rf_config* cfg, const char* key) {
    Str v;
    check(rf_config_get(cfg, key, &v.p), "config");
    return v.p;
}

void build_config(const Options& opt, Config& cfg) {
    check(rf_config_new(&cfg.p), "config");
    if (!opt.config_file.empty()) check(rf_config_load_file(cfg.p, opt.config_file.c_str()), "config");
    for (const auto& kv : opt.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw Failure{RF_E_INPUT, "--set expects key=value, got '" + kv + "'"};
        check(rf_config_set(cfg.p, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set");
    }
    if (opt.seed) check(rf_config_set(cfg.p, "seed", opt.seed->c_str()), "--seed");
    if (!opt.data.empty()) check(rf_config_set(cfg.p, "data.path", opt.data.c_str()), "--data");
    if (!opt.checkpoint.empty()) check(rf_config_set(cfg.p, "eval.checkpoint", opt.checkpoint.c_str()), "--checkpoint");
}

std::string timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    localtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y%m%d-%H%M%S");
    return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw Failure{RF_E_INPUT, "cannot write " + path.string()};
}

// <out>/<command>-<timestamp>[-k], with <out>/latest naming the newest one.
fs::path make_run_dir(const std::string& root, const std::string& command) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw Failure{RF_E_INPUT, "cannot create output directory " + root + ": " + ec.message()};
    const std::string base = command + "-" + timestamp();
    fs::path dir = fs::path(root) / base;
    for (int k = 1; fs::exists(dir); ++k) dir = fs::path(root) / (base + "-" + std::to_string(k));
    fs::create_directory(dir, ec);
    if (ec) throw Failure{RF_E_INPUT, "cannot create run directory " + dir.string() + ": " + ec.message()};
    write_text(fs::path(root) / "latest", dir.filename().string() + "\n");
    return dir;
}

struct Run {
    Config cfg;
    fs::path dir;
    bool quiet = false;

    void log(const std::string& line) const {
        if (!quiet) std::cout << line << '\n' << std::flush;
    }
};

void start_run(const Options& opt, const std::string& command, Run& run, bool needs_checkpoint = false) {
    build_config(opt, run.cfg);
    if (needs_checkpoint && config_value(run.cfg.p, "eval.checkpoint").empty())
        throw Failure{RF_E_INPUT, "a checkpoint is required (--checkpoint or eval.checkpoint)"};
    run.quiet = opt.quiet;
    run.dir = make_run_dir(opt.out, command);
    Str dump;
    check(rf_config_dump(run.cfg.p, &dump.p), "config");
    write_text(run.dir / "config.txt", dump.p);
    write_text(run.dir / "seed.txt", config_value(run.cfg.p, "seed") + "\n");
    run.log("run directory: " + run.dir.string());
}

void progress_to_log(const char* line, void* user) {
    const auto* run = static_cast<const Run*>(user);
    run->log(std::string("  ") + line);
    std::ofstream(run->dir / "progress.log", std::ios::app) << line << '\n';
}

void describe(const Run& run, const rf_dataset* ds) {
    rf_dataset_info info{};
    check(rf_dataset_info_get(ds, &info), "dataset");
    std::ostringstream os;
    os << "dataset: " << info.samples << " windows, " << info.nodes << " nodes x " << info.fast_bins << " bins x "
       << info.window << " pulses, " << info.participants << " participants, per class";
    for (auto c : info.class_counts) os << ' ' << c;
    run.log(os.str());
}

// data.path when given, otherwise a fresh recording from the data.* keys.
void obtain_dataset(const Run& run, Dataset& ds) {
    const auto path = config_value(run.cfg.p, "data.path");
    if (path.empty()) {
        check(rf_dataset_generate(run.cfg.p, &ds.p), "generate");
    } else {
        check(rf_dataset_load(path.c_str(), &ds.p), "load " + path);
    }
    describe(run, ds.p);
}

void load_model(const Run& run, Model& model) {
    const auto path = config_value(run.cfg.p, "eval.checkpoint");
    check(rf_model_load(path.c_str(), &model.p), "load " + path);
}

void report_parameters(const Run& run, const rf_model* model) {
    size_t n = 0;
    check(rf_model_parameter_count(model, &n), "model");
    run.log("parameters: " + std::to_string(n) + " (reference design: about 21K)");
}

std::string json_number(const std::string& json, const std::string& key) {
    // Top-level scalar lookup for console summaries; the full report is on disk.
    const auto at = json.find("\"" + key + "\":");
    if (at == std::string::npos) return "?";
    auto from = at + key.size() + 3;
    while (from < json.size() && json[from] == ' ') ++from;
    const auto to = json.find_first_of(",\n}", from);
    return json.substr(from, to - from);
}

void cmd_generate(const Options& opt) {
    Run run;
    start_run(opt, "generate", run);
    Dataset ds;
    check(rf_dataset_generate(run.cfg.p, &ds.p), "generate");
    describe(run, ds.p);
    const auto path = run.dir / "recording.rdr";
    check(rf_dataset_save(ds.p, path.c_str()), "save");
    run.log("recording: " + path.string());
}

void cmd_train(const Options& opt) {
    Run run;
    start_run(opt, "train", run);
    Dataset ds;
    obtain_dataset(run, ds);
    Model model;
    Str report;
    check(rf_train(run.cfg.p, ds.p, progress_to_log, &run, &model.p, &report.p), "train");
    const auto ckpt = run.dir / "model.rfm";
    check(rf_model_save(model.p, ckpt.c_str()), "save");
    write_text(run.dir / "report.json", report.p);
    report_parameters(run, model.p);
    run.log("test accuracy: " + json_number(report.p, "test_accuracy") + " (participant " +
            json_number(report.p, "held_out_participant") + ")");
    run.log("checkpoint: " + ckpt.string());
}

void cmd_eval(const Options& opt) {
    Run run;
    start_run(opt, "eval", run, true);
    Dataset ds;
    obtain_dataset(run, ds);
    Model model;
    load_model(run, model);
    report_parameters(run, model.p);
    Str report;
    check(rf_evaluate(run.cfg.p, model.p, ds.p, &report.p), "eval");
    write_text(run.dir / "eval.json", report.p);
    run.log("test accuracy: " + json_number(report.p, "test_accuracy") + " over " +
            json_number(report.p, "test_count") + " windows");
}

void cmd_lopo(const Options& opt) {
    Run run;
    start_run(opt, "lopo", run);
    Dataset ds;
    obtain_dataset(run, ds);
    Str report;
    check(rf_lopo(run.cfg.p, ds.p, progress_to_log, &run, &report.p), "lopo");
    write_text(run.dir / "lopo.json", report.p);
    run.log("mean test accuracy: " + json_number(report.p, "mean_test_accuracy") +
            ", best fold: " + json_number(report.p, "max_test_accuracy"));
}

void cmd_compress(const Options& opt) {
    Run run;
    start_run(opt, "compress", run);
    Dataset ds;
    obtain_dataset(run, ds);
    Str rows, summary;
    check(rf_compress(run.cfg.p, ds.p, progress_to_log, &run, &rows.p, &summary.p), "compress");
    write_text(run.dir / "compress_runs.csv", rows.p);
    write_text(run.dir / "compress_summary.csv", summary.p);
    if (!run.quiet) std::cout << summary.p;
}

void cmd_ablate(const Options& opt) {
    Run run;
    start_run(opt, "ablate", run, true);
    Dataset ds;
    obtain_dataset(run, ds);
    Model model;
    load_model(run, model);
    Str csv, summary;
    check(rf_ablate(run.cfg.p, model.p, ds.p, &csv.p, &summary.p), "ablate");
    write_text(run.dir / "ablation.csv", csv.p);
    write_text(run.dir / "ablation_summary.json", summary.p);
    if (!run.quiet) std::cout << csv.p;
    run.log("spearman(importance, zero-ablation drop): " +
            json_number(summary.p, "spearman_importance_vs_zero_drop"));
}

void cmd_embed(const Options& opt) {
    Run run;
    start_run(opt, "embed", run, true);
    Dataset ds;
    obtain_dataset(run, ds);
    Model model;
    load_model(run, model);
    Str csv;
    check(rf_embed(model.p, ds.p, &csv.p), "embed");
    write_text(run.dir / "embeddings.csv", csv.p);
    run.log("embeddings: " + (run.dir / "embeddings.csv").string());
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distributed radar activity recognition: data synthesis, training and analysis"};
    app.require_subcommand(0, 1);
    Options opt;
    bool list_keys = false;

    auto add_common = [&](CLI::App* a) {
        a->add_option("--config", opt.config_file, "run configuration file (key = value lines)")
            ->check(CLI::ExistingFile);
        a->add_option("--seed", opt.seed, "seed (overrides the config)");
        a->add_option("--out", opt.out, "root directory for run directories")->capture_default_str();
        a->add_option("--set", opt.overrides, "override one config key, key=value (repeatable)");
        a->add_flag("-q,--quiet", opt.quiet, "only errors on the console");
    };
    add_common(&app);
    app.add_flag("--list-keys", list_keys, "print every config key with its default and exit");

    struct Command {
        const char* name;
        const char* help;
        void (*run)(const Options&);
        bool data;
        bool checkpoint;
    };
    const Command commands[] = {
        {"generate", "synthesize a labelled recording", cmd_generate, false, false},
        {"train", "train on all but the held-out participant and save a checkpoint", cmd_train, true, false},
        {"eval", "evaluate a checkpoint on the held-out participant", cmd_eval, true, true},
        {"lopo", "leave-one-participant-out cross validation", cmd_lopo, true, false},
        {"compress", "compression schemes under a noisy channel", cmd_compress, true, false},
        {"ablate", "node importance against single-node ablation", cmd_ablate, true, true},
        {"embed", "export fused embeddings", cmd_embed, true, true},
    };
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        add_common(sub);
        if (c.data) sub->add_option("--data", opt.data, "recording file (default: synthesize from data.*)");
        if (c.checkpoint) sub->add_option("--checkpoint", opt.checkpoint, "model checkpoint");
        subs.emplace_back(sub, &c);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitInput;
    }

    if (list_keys) {
        Str help;
        if (rf_config_help(&help.p) != RF_OK) return RF_E_INTERNAL;
        std::cout << help.p;
        return kExitOk;
    }
    for (const auto& [sub, cmd] : subs) {
        if (!sub->parsed()) continue;
        try {
            cmd->run(opt);
            return kExitOk;
        } catch (const Failure& f) {
            std::cerr << "radarfuse " << cmd->name << ": " << f.message << '\n';
            return static_cast<int>(f.status);
        }
    }
    std::cout << app.help();
    return kExitInput;
}
