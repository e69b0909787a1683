#pragma once

// Per-node CNN encoder with shared weights, multi-head self-attention fusion
// across nodes and a two-layer classifier.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "radarfuse/radar.hpp"
#include "radarfuse/tensor.hpp"

namespace radarfuse {

enum class PoolChannels {
    keep,    // flatten every channel of the pooled map: d_model = 6 * pool_h * pool_w
    average  // average the channels away first: d_model = pool_h * pool_w
};

struct ModelConfig {
    std::size_t nodes = 5;
    std::size_t fast_bins = 480;
    std::size_t window = 30;
    std::size_t heads = 4;
    std::size_t head_dim = 24;  // d_k = d_v
    std::size_t classes = kActivityClasses;
    std::size_t pool_h = 5;
    std::size_t pool_w = 4;
    PoolChannels pool_channels = PoolChannels::keep;
    std::size_t hidden = 64;
    double dropout = 0.3;
    // Scale each node's magnitude channel by its own window peak before the
    // encoder. Needs only data local to the node.
    bool peak_normalize = true;

    static constexpr std::size_t kInputChannels = 2;
    static constexpr std::array<std::size_t, 4> kConvChannels = {6, 8, 6, 6};

    std::size_t d_model() const;
    std::size_t embedding_size() const { return nodes * d_model(); }
    void validate() const;
    bool operator==(const ModelConfig&) const = default;
};

struct NamedParameter {
    std::string name;
    Tensor value;
};

struct ModelState {
    ModelConfig config;
    // Fixed schema order, see parameter_schema().
    std::vector<NamedParameter> params;
    std::array<BatchNormStats, 3> bn;

    const Tensor& param(std::string_view name) const;
    Tensor& param(std::string_view name);

    ModelState clone() const;
    // Rounds parameters and running statistics to float32 precision.
    void snap_to_float();
};

struct ParameterSpec {
    std::string name;
    Shape shape;
    std::size_t fan_in = 0;  // 0 for batch-norm affine terms
    bool is_bias = false;
};

std::vector<ParameterSpec> parameter_schema(const ModelConfig& config);

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for conv and dense weights and biases,
// gamma = 1 and beta = 0 for batch norm.
ModelState init_model(const ModelConfig& config, std::uint64_t seed);

// Learnable scalars only; batch-norm running statistics are excluded.
std::size_t parameter_count(const ModelState& state);
std::size_t parameter_count(const ModelConfig& config);

struct FusionResult {
    Tensor fused;      // [B, N, d_model]
    Tensor attention;  // [B, N, N], mean of the per-head attention matrices
};

struct ModelOutput {
    Tensor features;   // S, [B, N, d_model]
    Tensor embedding;  // s_a, [B, N * d_model]
    Tensor attention;  // [B, N, N]
    Tensor logits;     // [B, classes]
    Tensor probs;      // [B, classes]
};

// Stacks node windows as [B * N, 2, F, W] (magnitude, phase channels).
Tensor window_tensor(std::span<const WindowSample* const> batch, const ModelConfig& config);

// [B * N, 2, F, W] -> [B * N, d_model]. Train mode uses batch statistics and
// updates the running averages of `state`.
Tensor encode(const ModelState& state, const Tensor& windows);
Tensor encode_train(ModelState& state, const Tensor& windows);

FusionResult fuse(const ModelState& state, const Tensor& features);

struct ClassifierOutput {
    Tensor logits;
    Tensor probs;
};
ClassifierOutput classify(const ModelState& state, const Tensor& embedding, Mode mode,
                          std::mt19937_64* rng = nullptr);

// Fusion and classifier applied to already encoded node features [B, N, d_model].
ModelOutput head(const ModelState& state, const Tensor& features, Mode mode, std::mt19937_64* rng = nullptr);

ModelOutput forward(const ModelState& state, std::span<const WindowSample* const> batch);
ModelOutput forward_train(ModelState& state, std::span<const WindowSample* const> batch, std::mt19937_64& rng);

// Checkpoint codec. Layout:
//
//   "RFM1", u32 version (1)
//   u32 N, F, W, d_model, H, d_k, classes, pool_h, pool_w, pool_channels (0 keep, 1 average), hidden,
//       peak_normalize (0/1)
//   u32 dropout rate in parts per million
//   every parameter of parameter_schema() in order, row-major float32
//   per batch-norm layer: running mean then running variance, float32
//
// Integers are little-endian; nothing follows the last statistic.
std::vector<std::uint8_t> encode_checkpoint(const ModelState& state);
ModelState decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const ModelState& state, const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path);

}  // namespace radarfuse
