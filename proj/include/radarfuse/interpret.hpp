#pragma once

// Attention-based node importance and node ablation.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "radarfuse/model.hpp"
#include "radarfuse/radar.hpp"

namespace radarfuse {

// Column sums I(j) = sum_i alpha[i][j] of a row-stochastic N x N matrix
// (row-major). Rows off by more than 1e-5 are a contract error.
std::vector<double> node_importance(std::span<const double> alpha, std::size_t nodes);

struct DatasetImportance {
    std::vector<double> mean;                  // I averaged over samples
    std::vector<std::size_t> argmax_counts;    // samples whose most important node is j (ties: lowest j)
    std::size_t samples = 0;
};

// Infer mode, dropout off.
DatasetImportance dataset_importance(const ModelState& state, std::span<const WindowSample* const> samples,
                                     std::size_t batch_size = 32);

enum class AblationMode {
    zeros,
    random  // Gaussian with the per-channel mean and std of the replaced window
};

const char* to_string(AblationMode mode);

WindowSample ablate(const WindowSample& sample, std::size_t node, AblationMode mode, std::uint64_t seed);

struct AblationRow {
    std::size_t node = 0;
    AblationMode mode = AblationMode::zeros;
    double importance = 0.0;
    std::size_t argmax_count = 0;
    std::size_t rank = 0;  // 1 = most important
    double accuracy = 0.0;
    double drop = 0.0;     // baseline - accuracy
};

struct AblationStudy {
    double baseline = 0.0;
    std::size_t samples = 0;
    DatasetImportance importance;
    std::vector<AblationRow> rows;  // nodes in order, zeros then random for each
    double spearman_zero = 0.0;     // importance vs zero-ablation drop
    double spearman_random = 0.0;
};

// Spearman rank correlation with average ranks for ties; 0 when either
// input is constant.
double spearman(std::span<const double> a, std::span<const double> b);

AblationStudy importance_ablation_study(const ModelState& state, std::span<const WindowSample* const> samples,
                                        std::uint64_t seed, std::size_t batch_size = 32);

// Long format: a baseline control row (node "none") then one row per node
// and mode. Columns:
// node,mode,importance,argmax_count,rank,accuracy,baseline_acc,drop
std::string to_csv(const AblationStudy& study);

}  // namespace radarfuse
