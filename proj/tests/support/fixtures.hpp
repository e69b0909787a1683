#pragma once

#include <numeric>
#include <random>
#include <vector>

#include "radarfuse/model.hpp"
#include "radarfuse/radar.hpp"

namespace radarfuse::fixture {

inline WindowSample random_window(const ModelConfig& c, std::mt19937_64& rng, int label = 0, int participant = 0) {
    std::uniform_real_distribution<float> mag(0.0f, 1.0f), ph(-3.1f, 3.1f);
    WindowSample s;
    s.fast_bins = c.fast_bins;
    s.window = c.window;
    s.label = label;
    s.participant = participant;
    s.nodes.assign(c.nodes, std::vector<float>(c.fast_bins * c.window * 2));
    for (auto& node : s.nodes)
        for (std::size_t i = 0; i < node.size(); i += 2) {
            node[i] = mag(rng);
            node[i + 1] = ph(rng);
        }
    return s;
}

// Small synthetic radar set: 9 classes, `participants` people, `per_class` windows each.
inline std::vector<WindowSample> synthetic_set(std::size_t fast_bins, std::size_t nodes, std::size_t window,
                                               std::size_t participants, std::size_t per_class, std::uint64_t seed) {
    SynthesisConfig cfg;
    cfg.radar = RadarConfig::ring(fast_bins, nodes);
    cfg.window = window;
    cfg.participants = participants;
    cfg.samples_per_class = per_class;
    cfg.seed = seed;
    return synthesize_dataset(cfg);
}

inline ModelConfig model_for(std::size_t fast_bins, std::size_t nodes, std::size_t window) {
    ModelConfig c;
    c.fast_bins = fast_bins;
    c.nodes = nodes;
    c.window = window;
    return c;
}

inline DatasetSplit everything(std::size_t n) {
    DatasetSplit s;
    s.train.resize(n);
    std::iota(s.train.begin(), s.train.end(), 0);
    s.validation = s.train;
    s.held_out_participant = -1;
    return s;
}

}  // namespace radarfuse::fixture
