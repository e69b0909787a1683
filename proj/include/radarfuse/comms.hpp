#pragma once

// Node-to-fusion transmission study: encoder feature compression versus
// fast-time downsampling over an additive white Gaussian noise channel.

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "radarfuse/learning.hpp"
#include "radarfuse/model.hpp"
#include "radarfuse/radar.hpp"

namespace radarfuse {

struct Rational {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    // Reduced form; den must be nonzero.
    static Rational of(std::uint64_t num, std::uint64_t den);
    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const;  // "480" or "7/2"
    bool operator==(const Rational&) const = default;
};

enum class SchemeKind { encoder, downsample };

struct CompressionScheme {
    SchemeKind kind = SchemeKind::encoder;
    std::size_t pool_h = 5;  // encoder pool target
    std::size_t pool_w = 4;
    std::size_t depth = ModelConfig::kConvChannels.back();
    std::size_t ratio = 1;   // downsample: keep every ratio-th fast bin

    static CompressionScheme encoder(std::size_t pool_h, std::size_t pool_w);
    static CompressionScheme downsample(std::size_t ratio);

    // Values one node puts on the wire for an F x W window.
    std::size_t payload(std::size_t fast_bins, std::size_t window) const;
    std::string kind_name() const;  // "encoder" / "downsample"
    std::string setting() const;    // "5x4" / "20"
    void validate() const;
};

// The five encoder pool targets of the reference study, channel depth 6.
std::vector<CompressionScheme> reference_encoder_schemes();
std::vector<CompressionScheme> reference_downsample_schemes();

// Raw window elements per node (F * W * 2) over transmitted elements.
Rational compression_factor(const CompressionScheme& scheme, std::size_t fast_bins = 480, std::size_t window = 30);

struct ChannelModel {
    static constexpr double kNoiseless = std::numeric_limits<double>::infinity();

    double snr_db = kNoiseless;
    std::uint64_t seed = 0;
};

// Adds white Gaussian noise of power mean(x^2) / 10^(snr/10). An infinite SNR
// returns the payload unchanged.
std::vector<double> transmit(std::span<const double> payload, const ChannelModel& channel);

// Keeps fast bins 0, r, 2r, ... of every node; trailing bins that do not fill
// a full stride are dropped.
WindowSample decimate(const WindowSample& sample, std::size_t ratio);

// Model layout for inputs decimated by `ratio`; the pool height is clamped
// to the decimated extent.
ModelConfig downsampled_config(const ModelConfig& base, std::size_t ratio);
// Model layout whose pooled feature map is the scheme's payload.
ModelConfig encoder_config(const ModelConfig& base, const CompressionScheme& scheme);

// Each node encodes its window, its feature vector crosses the channel, and
// fusion plus classification run on the received features. Infer mode.
ModelOutput pipeline_encoder(std::span<const WindowSample* const> batch, const ModelState& state,
                             const CompressionScheme& scheme, const ChannelModel& channel);

// Each node decimates its window and sends the polar values; the full model
// `state_ds`, trained on decimated inputs, runs at the fusion processor.
ModelOutput pipeline_downsample(std::span<const WindowSample* const> batch, std::size_t ratio,
                                const ModelState& state_ds, const ChannelModel& channel);

// Accuracy of either pipeline over `samples`; batches draw independent
// channel realizations derived from channel.seed.
double channel_accuracy(std::span<const WindowSample* const> samples, const ModelState& state,
                        const CompressionScheme& scheme, const ChannelModel& channel, std::size_t batch_size = 32);

struct TrainedScheme {
    CompressionScheme scheme;
    ModelState state;
    TrainReport report;
};

// Trains one model per scheme on the same split and seed. Downsample schemes
// train on decimated copies of the data.
std::vector<TrainedScheme> train_schemes(std::span<const WindowSample> samples, const DatasetSplit& split,
                                         const ModelConfig& base, const TrainConfig& train_cfg,
                                         const HybridLossConfig& loss, std::span<const CompressionScheme> schemes);

struct SweepRow {
    CompressionScheme scheme;
    Rational factor;
    double snr_db = 0.0;
    std::uint64_t seed = 0;
    double accuracy = 0.0;
};

struct SweepSummary {
    CompressionScheme scheme;
    Rational factor;
    double snr_db = 0.0;
    double mean = 0.0;
    double stddev = 0.0;  // population, over seeds
    std::size_t seeds = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<SweepSummary> summary;
};

// Every (scheme, snr, seed) cell evaluated on `samples` (in their original,
// undecimated form).
SweepResult snr_sweep(std::span<const TrainedScheme> models, std::span<const double> snr_db,
                      std::span<const std::uint64_t> seeds, std::span<const WindowSample* const> samples);

// Columns: scheme,pool_or_ratio,compression_factor,snr_db,seed,accuracy
std::string to_csv(std::span<const SweepRow> rows);
// Columns: scheme,pool_or_ratio,compression_factor,snr_db,seeds,mean_accuracy,std_accuracy
std::string to_csv(std::span<const SweepSummary> rows);

}  // namespace radarfuse
