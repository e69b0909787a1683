#pragma once

// Hybrid cross-entropy + supervised contrastive objective, Adam, and the
// early-stopped training loop with leave-one-participant-out evaluation.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "radarfuse/model.hpp"
#include "radarfuse/radar.hpp"

namespace radarfuse {

struct HybridLossConfig {
    double gamma = 1.0;  // weight of the contrastive term
    double tau = 0.5;    // temperature

    void validate() const;
};

struct HybridLoss {
    Tensor total;
    double cross_entropy = 0.0;
    double contrastive = 0.0;
};

// CE on output.probs plus gamma * SCL on the L2-normalized embedding rows.
HybridLoss hybrid_loss(const ModelOutput& output, std::span<const int> labels, const HybridLossConfig& cfg);

struct AdamConfig {
    double lr = 3e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
   public:
    explicit Adam(std::vector<NamedParameter> params, AdamConfig cfg = {});

    // One bias-corrected update from the current gradients. A parameter
    // without a gradient is treated as having a zero gradient.
    void step();
    void zero_grad();

    double lr() const { return cfg_.lr; }
    void set_lr(double lr) { cfg_.lr = lr; }
    std::size_t steps() const { return t_; }

   private:
    std::vector<NamedParameter> params_;
    std::vector<std::vector<double>> m_, v_;
    AdamConfig cfg_;
    std::size_t t_ = 0;
};

struct TrainConfig {
    double lr = 3e-3;
    std::size_t max_epochs = 100;
    bool early_stopping = true;
    std::size_t patience = 10;
    std::size_t lr_patience = 10;
    double min_delta = 1e-5;  // validation loss must drop by at least this much to count
    double target_accuracy = 0.0;  // stop once validation accuracy reaches this; 0 disables
    std::size_t batch_size = 32;
    bool augment = false;  // on-the-fly noise augmentation of training batches
    double augment_scale = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double train_accuracy = 0.0;  // train mode, as seen by the optimizer
    double val_loss = 0.0;
    double val_accuracy = 0.0;
    double lr = 0.0;
    bool improved = false;
};

struct Evaluation {
    std::size_t count = 0;
    double accuracy = 0.0;
    double loss = 0.0;  // only when a loss config was given
    std::vector<int> predictions;
    std::vector<std::vector<std::size_t>> counts;  // [true][predicted]

    // Row-normalized percentages; rows of absent classes stay zero.
    std::vector<std::vector<double>> confusion_percent() const;
};

Evaluation evaluate(const ModelState& state, std::span<const WindowSample* const> samples,
                    const HybridLossConfig* loss = nullptr, std::size_t batch_size = 32);

struct TrainReport {
    std::vector<EpochRecord> epochs;
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    std::size_t lr_halvings = 0;
    double best_val_loss = 0.0;
    double train_accuracy = 0.0;  // infer mode, returned state
    double val_accuracy = 0.0;
    bool has_test = false;
    double test_accuracy = 0.0;
    std::size_t test_count = 0;
    std::vector<std::vector<double>> confusion;  // test set, percent
    std::size_t parameter_count = 0;
    int held_out_participant = -1;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> config;  // resolved run configuration
};

std::string to_json(const TrainReport& report);

using EpochCallback = std::function<void(const EpochRecord&)>;

struct TrainResult {
    ModelState state;  // best validation loss, rounded to float32
    TrainReport report;
};

TrainResult train(std::span<const WindowSample> samples, const DatasetSplit& split, const ModelConfig& model,
                  const TrainConfig& cfg, const HybridLossConfig& loss, const EpochCallback& on_epoch = {});

struct LopoResult {
    std::vector<TrainReport> reports;
    double max_test_accuracy = 0.0;
    double mean_test_accuracy = 0.0;
};

using FoldCallback = std::function<void(std::size_t fold, const TrainReport&)>;

LopoResult lopo_run(std::span<const WindowSample> samples, const ModelConfig& model, const TrainConfig& cfg,
                    const HybridLossConfig& loss, const FoldCallback& on_fold = {});

std::string to_json(const LopoResult& result);

}  // namespace radarfuse
