#include "radarfuse/learning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "json.hpp"

#include "radarfuse/error.hpp"
#include "seeding.hpp"

namespace radarfuse {

void HybridLossConfig::validate() const {
    if (!(tau > 0.0)) fail(ErrorKind::config, "loss: temperature must be positive");
    if (!(gamma >= 0.0)) fail(ErrorKind::config, "loss: contrastive weight must be non-negative");
}

HybridLoss hybrid_loss(const ModelOutput& output, std::span<const int> labels, const HybridLossConfig& cfg) {
    cfg.validate();
    Tensor ce = cross_entropy(output.probs, labels);
    HybridLoss out;
    out.cross_entropy = ce.item();
    if (cfg.gamma == 0.0) {
        out.total = ce;
        return out;
    }
    Tensor scl = supervised_contrastive(l2_normalize(output.embedding, 1), labels, cfg.tau);
    out.contrastive = scl.item();
    out.total = add(ce, scale(scl, cfg.gamma));
    return out;
}

// ---- Adam -----------------------------------------------------------------------

Adam::Adam(std::vector<NamedParameter> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const auto& p : params_) {
        m_.emplace_back(p.value.numel(), 0.0);
        v_.emplace_back(p.value.numel(), 0.0);
    }
}

void Adam::step() {
    for (const auto& p : params_) {
        if (!p.value.has_grad()) continue;
        for (double g : p.value.grad()) {
            if (!std::isfinite(g)) fail(ErrorKind::numeric, "non-finite gradient in parameter " + p.name);
        }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i].value;
        auto theta = p.data_mut();
        auto& m = m_[i];
        auto& v = v_[i];
        const bool has = p.has_grad();
        const auto g = has ? p.grad() : std::span<const double>();
        for (std::size_t k = 0; k < theta.size(); ++k) {
            const double gk = has ? g[k] : 0.0;
            m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * gk;
            v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * gk * gk;
            theta[k] -= cfg_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.value.zero_grad();
}

// ---- evaluation -----------------------------------------------------------------

std::vector<std::vector<double>> Evaluation::confusion_percent() const {
    std::vector<std::vector<double>> out(counts.size(), std::vector<double>(counts.size(), 0.0));
    for (std::size_t r = 0; r < counts.size(); ++r) {
        const std::size_t total = std::accumulate(counts[r].begin(), counts[r].end(), std::size_t{0});
        if (total == 0) continue;
        for (std::size_t c = 0; c < counts[r].size(); ++c)
            out[r][c] = 100.0 * static_cast<double>(counts[r][c]) / static_cast<double>(total);
    }
    return out;
}

namespace {

int argmax_row(std::span<const double> row) {
    return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::vector<const WindowSample*> pick(std::span<const WindowSample> samples, std::span<const std::size_t> idx) {
    std::vector<const WindowSample*> out;
    out.reserve(idx.size());
    for (auto i : idx) {
        if (i >= samples.size()) fail(ErrorKind::index, "split index " + std::to_string(i) + " out of range");
        out.push_back(&samples[i]);
    }
    return out;
}

}  // namespace

Evaluation evaluate(const ModelState& state, std::span<const WindowSample* const> samples,
                    const HybridLossConfig* loss, std::size_t batch_size) {
    if (samples.empty()) fail(ErrorKind::contract, "evaluate: no samples");
    if (batch_size == 0) batch_size = samples.size();
    const std::size_t C = state.config.classes;
    NoGradGuard no_grad;
    Evaluation ev;
    ev.count = samples.size();
    ev.counts.assign(C, std::vector<std::size_t>(C, 0));
    ev.predictions.reserve(samples.size());
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t at = 0; at < samples.size(); at += batch_size) {
        const auto chunk = samples.subspan(at, std::min(batch_size, samples.size() - at));
        const auto out = forward(state, chunk);
        std::vector<int> labels;
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            const int label = chunk[b]->label;
            if (label < 0 || static_cast<std::size_t>(label) >= C)
                fail(ErrorKind::label, "label " + std::to_string(label) + " outside the model's classes");
            const int pred = argmax_row(out.probs.data().subspan(b * C, C));
            ev.predictions.push_back(pred);
            ++ev.counts[static_cast<std::size_t>(label)][static_cast<std::size_t>(pred)];
            correct += pred == label;
            labels.push_back(label);
        }
        if (loss) loss_sum += hybrid_loss(out, labels, *loss).total.item() * static_cast<double>(chunk.size());
    }
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(ev.count);
    ev.loss = loss ? loss_sum / static_cast<double>(ev.count) : 0.0;
    return ev;
}

// ---- training -------------------------------------------------------------------

void TrainConfig::validate() const {
    if (!(lr > 0.0)) fail(ErrorKind::config, "train: learning rate must be positive");
    if (max_epochs == 0) fail(ErrorKind::config, "train: max_epochs must be at least 1");
    if (patience == 0 || lr_patience == 0) fail(ErrorKind::config, "train: patience must be at least 1");
    if (batch_size == 0) fail(ErrorKind::config, "train: batch size must be at least 1");
    if (!(augment_scale >= 0.0)) fail(ErrorKind::config, "train: augmentation scale must be non-negative");
    if (!(target_accuracy >= 0.0 && target_accuracy <= 1.0))
        fail(ErrorKind::config, "train: target accuracy must lie in [0, 1]");
}

TrainResult train(std::span<const WindowSample> samples, const DatasetSplit& split, const ModelConfig& model,
                  const TrainConfig& cfg, const HybridLossConfig& loss_cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    loss_cfg.validate();
    if (split.train.empty() || split.validation.empty())
        fail(ErrorKind::config, "train: the split needs non-empty train and validation sets");
    const auto train_set = pick(samples, split.train);
    const auto val_set = pick(samples, split.validation);

    ModelState state = init_model(model, detail::mix_seed(cfg.seed, 0x696e6974ULL));
    Adam adam(state.params, AdamConfig{cfg.lr});
    std::mt19937_64 rng(detail::mix_seed(cfg.seed, 0x74726169ULL));

    TrainReport report;
    report.seed = cfg.seed;
    report.held_out_participant = split.held_out_participant;
    report.parameter_count = parameter_count(state);
    ModelState best = state.clone();
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t bad_epochs = 0, since_reduction = 0;

    std::vector<std::size_t> order(train_set.size());
    std::vector<WindowSample> augmented;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        double loss_sum = 0.0;
        std::size_t correct = 0;
        for (std::size_t at = 0; at < order.size(); at += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - at);
            std::vector<const WindowSample*> batch;
            std::vector<int> labels;
            augmented.clear();
            augmented.reserve(n);
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t i = order[at + b];
                const WindowSample* s = train_set[i];
                if (cfg.augment) {
                    augmented.push_back(augment(*s, cfg.augment_scale, detail::mix_seed(cfg.seed, epoch, i, 0x61756775ULL)));
                    s = &augmented.back();
                }
                batch.push_back(s);
                labels.push_back(s->label);
            }
            const auto out = forward_train(state, batch, rng);
            const auto loss = hybrid_loss(out, labels, loss_cfg);
            const double value = loss.total.item();
            if (!std::isfinite(value)) fail(ErrorKind::numeric, "non-finite training loss at epoch " + std::to_string(epoch));
            adam.zero_grad();
            loss.total.backward();
            adam.step();
            loss_sum += value * static_cast<double>(n);
            for (std::size_t b = 0; b < n; ++b)
                correct += argmax_row(out.probs.data().subspan(b * model.classes, model.classes)) == labels[b];
        }

        const auto val = evaluate(state, val_set, &loss_cfg, cfg.batch_size);
        if (!std::isfinite(val.loss)) fail(ErrorKind::numeric, "non-finite validation loss at epoch " + std::to_string(epoch));
        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(order.size());
        rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(order.size());
        rec.val_loss = val.loss;
        rec.val_accuracy = val.accuracy;
        rec.lr = adam.lr();
        rec.improved = val.loss < best_loss - cfg.min_delta;
        if (rec.improved) {
            best_loss = val.loss;
            best = state.clone();
            report.best_epoch = epoch;
            bad_epochs = 0;
            since_reduction = 0;
        } else {
            ++bad_epochs;
            if (++since_reduction >= cfg.lr_patience) {
                adam.set_lr(adam.lr() / 2.0);
                ++report.lr_halvings;
                since_reduction = 0;
            }
        }
        report.epochs.push_back(rec);
        report.epochs_run = epoch;
        if (on_epoch) on_epoch(rec);
        if (cfg.early_stopping && bad_epochs >= cfg.patience) break;
        if (cfg.target_accuracy > 0.0 && rec.val_accuracy >= cfg.target_accuracy) break;
    }

    best.snap_to_float();
    const auto val = evaluate(best, val_set, &loss_cfg, cfg.batch_size);
    report.best_val_loss = val.loss;
    report.val_accuracy = val.accuracy;
    report.train_accuracy = evaluate(best, train_set, nullptr, cfg.batch_size).accuracy;
    if (!split.test.empty()) {
        const auto test = evaluate(best, pick(samples, split.test), nullptr, cfg.batch_size);
        report.has_test = true;
        report.test_accuracy = test.accuracy;
        report.test_count = test.count;
        report.confusion = test.confusion_percent();
    }
    return {std::move(best), std::move(report)};
}

LopoResult lopo_run(std::span<const WindowSample> samples, const ModelConfig& model, const TrainConfig& cfg,
                    const HybridLossConfig& loss, const FoldCallback& on_fold) {
    const auto splits = lopo_splits(samples, cfg.seed);
    LopoResult result;
    for (std::size_t f = 0; f < splits.size(); ++f) {
        auto fold = train(samples, splits[f], model, cfg, loss);
        if (on_fold) on_fold(f, fold.report);
        result.reports.push_back(std::move(fold.report));
    }
    double total = 0.0;
    result.max_test_accuracy = 0.0;
    for (const auto& r : result.reports) {
        total += r.test_accuracy;
        result.max_test_accuracy = std::max(result.max_test_accuracy, r.test_accuracy);
    }
    result.mean_test_accuracy = total / static_cast<double>(result.reports.size());
    return result;
}

// ---- serialization --------------------------------------------------------------

namespace {

nlohmann::json report_json(const TrainReport& r) {
    nlohmann::json epochs = nlohmann::json::array();
    for (const auto& e : r.epochs) {
        epochs.push_back({{"epoch", e.epoch},
                          {"train_loss", e.train_loss},
                          {"train_accuracy", e.train_accuracy},
                          {"val_loss", e.val_loss},
                          {"val_accuracy", e.val_accuracy},
                          {"lr", e.lr},
                          {"improved", e.improved}});
    }
    nlohmann::json j = {{"epochs_run", r.epochs_run},
                        {"best_epoch", r.best_epoch},
                        {"lr_halvings", r.lr_halvings},
                        {"best_val_loss", r.best_val_loss},
                        {"train_accuracy", r.train_accuracy},
                        {"val_accuracy", r.val_accuracy},
                        {"parameter_count", r.parameter_count},
                        {"seed", r.seed},
                        {"held_out_participant", r.held_out_participant},
                        {"epochs", std::move(epochs)}};
    if (r.has_test) {
        j["test_accuracy"] = r.test_accuracy;
        j["test_count"] = r.test_count;
        j["confusion_percent"] = r.confusion;
    }
    if (!r.config.empty()) j["config"] = r.config;
    return j;
}

}  // namespace

std::string to_json(const TrainReport& report) { return report_json(report).dump(2); }

std::string to_json(const LopoResult& result) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& r : result.reports) folds.push_back(report_json(r));
    nlohmann::json j = {{"folds", std::move(folds)},
                        {"max_test_accuracy", result.max_test_accuracy},
                        {"mean_test_accuracy", result.mean_test_accuracy}};
    return j.dump(2);
}

}  // namespace radarfuse
