#include "radarfuse/run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <utility>
#include <sstream>

#include "radarfuse/error.hpp"

namespace radarfuse {

namespace {

using Type = RunConfig::Type;

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(std::string_view s) {
    std::vector<std::string> out;
    while (!s.empty()) {
        const auto comma = s.find(',');
        const auto item = trim(s.substr(0, comma));
        if (!item.empty()) out.emplace_back(item);
        if (comma == std::string_view::npos) break;
        s.remove_prefix(comma + 1);
    }
    return out;
}

template <class T>
bool parse_int(std::string_view s, T& out) {
    const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
    return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

bool parse_real(std::string_view s, double& out) {
    const std::string text(s);
    if (text == "inf" || text == "+inf") {
        out = INFINITY;
        return true;
    }
    if (text == "-inf") {
        out = -INFINITY;
        return true;
    }
    if (text.empty()) return false;
    char* end = nullptr;
    out = std::strtod(text.c_str(), &end);
    return end == text.c_str() + text.size() && std::isfinite(out);
}

bool parse_bool(std::string_view s, bool& out) {
    if (s == "true" || s == "1" || s == "on" || s == "yes") return out = true, true;
    if (s == "false" || s == "0" || s == "off" || s == "no") return out = false, true;
    return false;
}

[[noreturn]] void bad_value(std::string_view key, std::string_view value, std::string_view expected) {
    fail(ErrorKind::config, "config key '" + std::string(key) + "': '" + std::string(value) + "' is not " +
                                std::string(expected));
}

}  // namespace

RunConfig::RunConfig() {
    auto add = [&](std::string key, Type type, std::string value, std::string help,
                   std::vector<std::string> choices = {}) {
        entries_.push_back({std::move(key), type, std::move(value), std::move(choices), std::move(help)});
    };
    add("seed", Type::unsigned_integer, "42", "seed for generation, splits, initialization and channel noise");

    add("data.path", Type::text, "", "recording file (generate writes it, other commands read it)");
    add("data.nodes", Type::unsigned_integer, "5", "radar nodes");
    add("data.fast_bins", Type::unsigned_integer, "480", "fast-time bins per pulse");
    add("data.window", Type::unsigned_integer, "30", "slow-time pulses per window");
    add("data.participants", Type::unsigned_integer, "5", "synthetic participants");
    add("data.samples_per_class", Type::unsigned_integer, "4", "windows per class and participant");
    add("data.imbalanced", Type::boolean, "false", "skew class counts to the reference campaign shares");
    add("data.scenario", Type::choice, "ring", "target placement", {"ring", "geometry"});
    add("data.noise_db", Type::real, "-30", "measurement noise relative to the frame peak, dB (ring scenario)");

    add("model.pool_h", Type::unsigned_integer, "5", "encoder pool height");
    add("model.pool_w", Type::unsigned_integer, "4", "encoder pool width");
    add("model.pool_channels", Type::choice, "keep", "flatten all encoder channels or average them", {"keep", "average"});
    add("model.heads", Type::unsigned_integer, "4", "attention heads");
    add("model.head_dim", Type::unsigned_integer, "24", "per-head key/value width");
    add("model.hidden", Type::unsigned_integer, "64", "classifier hidden width");
    add("model.dropout", Type::real, "0.3", "classifier dropout rate");
    add("model.peak_normalize", Type::boolean, "true", "scale each node's magnitude by its window peak");

    add("train.lr", Type::real, "0.003", "Adam learning rate");
    add("train.max_epochs", Type::unsigned_integer, "100", "epoch limit");
    add("train.early_stopping", Type::boolean, "true", "stop after train.patience epochs without improvement");
    add("train.patience", Type::unsigned_integer, "10", "early stopping patience, epochs");
    add("train.lr_patience", Type::unsigned_integer, "10", "epochs without improvement before halving the rate");
    add("train.min_delta", Type::real, "1e-5", "validation loss drop that counts as improvement");
    add("train.batch_size", Type::unsigned_integer, "32", "mini-batch size");
    add("train.augment", Type::choice, "auto", "noise augmentation of training batches; auto = when classes are imbalanced",
        {"auto", "on", "off"});
    add("train.augment_scale", Type::real, "0.1", "augmentation noise std relative to the channel std");
    add("train.target_accuracy", Type::real, "0", "stop once validation accuracy reaches this (0 = off)");
    add("train.participant", Type::integer, "0", "held-out participant for train/eval");

    add("loss.gamma", Type::real, "1", "weight of the contrastive term");
    add("loss.tau", Type::real, "0.5", "contrastive temperature");

    add("eval.checkpoint", Type::text, "", "checkpoint for eval, ablate and embed");

    add("compress.encoder", Type::list, "5x2,5x4,5x8,10x4,10x8", "encoder pool targets HxW");
    add("compress.downsample", Type::list, "2,5,10,20", "fast-time downsampling ratios");
    add("compress.snr_db", Type::list, "-10,0,10,20,inf", "channel SNR grid, dB");
    add("compress.seeds", Type::list, "1,2,3", "channel noise seeds");
}

RunConfig::Entry& RunConfig::find(std::string_view key) {
    return const_cast<Entry&>(std::as_const(*this).find(key));
}

const RunConfig::Entry& RunConfig::find(std::string_view key) const {
    for (const auto& e : entries_)
        if (e.key == key) return e;
    fail(ErrorKind::config, "unknown config key '" + std::string(key) + "'");
}

bool RunConfig::has(std::string_view key) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.key == key; });
}

const std::string& RunConfig::get(std::string_view key) const { return find(key).value; }

void RunConfig::set(std::string_view key, std::string_view raw) {
    Entry& e = find(key);
    const auto value = trim(raw);
    switch (e.type) {
        case Type::integer: {
            std::int64_t v;
            if (!parse_int(value, v)) bad_value(key, value, "an integer");
            break;
        }
        case Type::unsigned_integer: {
            std::uint64_t v;
            if (!parse_int(value, v)) bad_value(key, value, "a non-negative integer");
            break;
        }
        case Type::real: {
            double v;
            if (!parse_real(value, v) || !std::isfinite(v)) bad_value(key, value, "a finite number");
            break;
        }
        case Type::boolean: {
            bool v;
            if (!parse_bool(value, v)) bad_value(key, value, "true or false");
            break;
        }
        case Type::choice:
            if (std::find(e.choices.begin(), e.choices.end(), value) == e.choices.end()) {
                std::string all;
                for (const auto& c : e.choices) all += (all.empty() ? "" : "|") + c;
                bad_value(key, value, "one of " + all);
            }
            break;
        case Type::text:
        case Type::list:
            break;
    }
    e.value = std::string(value);
    // list keys are checked by their typed accessors as well
    if (e.key == "compress.encoder") schemes();
    if (e.key == "compress.downsample") schemes();
    if (e.key == "compress.snr_db") snr_grid();
    if (e.key == "compress.seeds") sweep_seeds();
}

void RunConfig::load_text(std::string_view text, std::string_view origin) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            fail(ErrorKind::config, std::string(origin) + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        try {
            set(trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const Error& e) {
            fail(ErrorKind::config, std::string(origin) + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void RunConfig::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot read config file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    load_text(ss.str(), path.string());
}

std::string RunConfig::dump() const {
    std::string out;
    for (const auto& e : entries_) out += e.key + " = " + e.value + "\n";
    return out;
}

std::int64_t RunConfig::integer(std::string_view key) const {
    const auto& e = find(key);
    std::int64_t v = 0;
    if (!parse_int(std::string_view(e.value), v)) bad_value(key, e.value, "an integer");
    return v;
}

std::uint64_t RunConfig::uinteger(std::string_view key) const {
    const auto& e = find(key);
    std::uint64_t v = 0;
    if (!parse_int(std::string_view(e.value), v)) bad_value(key, e.value, "a non-negative integer");
    return v;
}

double RunConfig::real(std::string_view key) const {
    const auto& e = find(key);
    double v = 0.0;
    if (!parse_real(e.value, v)) bad_value(key, e.value, "a number");
    return v;
}

bool RunConfig::flag(std::string_view key) const {
    const auto& e = find(key);
    bool v = false;
    if (!parse_bool(e.value, v)) bad_value(key, e.value, "true or false");
    return v;
}

SynthesisConfig RunConfig::synthesis() const {
    SynthesisConfig s;
    const auto nodes = uinteger("data.nodes"), bins = uinteger("data.fast_bins");
    s.scenario = get("data.scenario") == "geometry" ? Scenario::geometry : Scenario::ring;
    if (s.scenario == Scenario::geometry) {
        s.radar = SynthesisConfig::geometry_radar(bins, nodes);
    } else {
        s.radar = RadarConfig::ring(bins, nodes);
        s.radar.noise_db = real("data.noise_db");
    }
    s.window = uinteger("data.window");
    s.participants = uinteger("data.participants");
    s.samples_per_class = uinteger("data.samples_per_class");
    s.imbalanced = flag("data.imbalanced");
    s.seed = seed();
    return s;
}

ModelConfig RunConfig::model(std::size_t nodes, std::size_t fast_bins, std::size_t window) const {
    ModelConfig c;
    c.nodes = nodes;
    c.fast_bins = fast_bins;
    c.window = window;
    c.pool_h = uinteger("model.pool_h");
    c.pool_w = uinteger("model.pool_w");
    c.pool_channels = get("model.pool_channels") == "average" ? PoolChannels::average : PoolChannels::keep;
    c.heads = uinteger("model.heads");
    c.head_dim = uinteger("model.head_dim");
    c.hidden = uinteger("model.hidden");
    c.dropout = real("model.dropout");
    c.peak_normalize = flag("model.peak_normalize");
    c.validate();
    return c;
}

TrainConfig RunConfig::train(bool imbalanced) const {
    TrainConfig t;
    t.lr = real("train.lr");
    t.max_epochs = uinteger("train.max_epochs");
    t.early_stopping = flag("train.early_stopping");
    t.patience = uinteger("train.patience");
    t.lr_patience = uinteger("train.lr_patience");
    t.min_delta = real("train.min_delta");
    t.batch_size = uinteger("train.batch_size");
    const auto& aug = get("train.augment");
    t.augment = aug == "on" || (aug == "auto" && imbalanced);
    t.augment_scale = real("train.augment_scale");
    t.target_accuracy = real("train.target_accuracy");
    t.seed = seed();
    t.validate();
    return t;
}

HybridLossConfig RunConfig::loss() const {
    HybridLossConfig l;
    l.gamma = real("loss.gamma");
    l.tau = real("loss.tau");
    l.validate();
    return l;
}

std::vector<CompressionScheme> RunConfig::schemes() const {
    std::vector<CompressionScheme> out;
    for (const auto& item : split_list(get("compress.encoder"))) {
        const auto x = item.find('x');
        std::size_t h = 0, w = 0;
        if (x == std::string::npos || !parse_int(std::string_view(item).substr(0, x), h) ||
            !parse_int(std::string_view(item).substr(x + 1), w) || h == 0 || w == 0) {
            bad_value("compress.encoder", item, "a pool target HxW");
        }
        out.push_back(CompressionScheme::encoder(h, w));
    }
    for (const auto& item : split_list(get("compress.downsample"))) {
        std::size_t r = 0;
        if (!parse_int(std::string_view(item), r) || r == 0) bad_value("compress.downsample", item, "a positive ratio");
        out.push_back(CompressionScheme::downsample(r));
    }
    return out;
}

std::vector<double> RunConfig::snr_grid() const {
    std::vector<double> out;
    for (const auto& item : split_list(get("compress.snr_db"))) {
        double v = 0.0;
        if (!parse_real(item, v) || v == -INFINITY) bad_value("compress.snr_db", item, "a finite SNR or inf");
        out.push_back(v);
    }
    if (out.empty()) fail(ErrorKind::config, "config key 'compress.snr_db' lists no SNR values");
    return out;
}

std::vector<std::uint64_t> RunConfig::sweep_seeds() const {
    std::vector<std::uint64_t> out;
    for (const auto& item : split_list(get("compress.seeds"))) {
        std::uint64_t v = 0;
        if (!parse_int(std::string_view(item), v)) bad_value("compress.seeds", item, "a seed");
        out.push_back(v);
    }
    if (out.empty()) fail(ErrorKind::config, "config key 'compress.seeds' lists no seeds");
    return out;
}

}  // namespace radarfuse
