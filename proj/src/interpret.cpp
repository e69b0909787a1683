#include "radarfuse/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include "radarfuse/error.hpp"
#include "radarfuse/learning.hpp"
#include "seeding.hpp"

namespace radarfuse {

std::vector<double> node_importance(std::span<const double> alpha, std::size_t nodes) {
    if (nodes == 0 || alpha.size() != nodes * nodes) {
        fail(ErrorKind::dimension, "node_importance: expected " + std::to_string(nodes) + "x" + std::to_string(nodes) +
                                       " attention, got " + std::to_string(alpha.size()) + " values");
    }
    std::vector<double> imp(nodes, 0.0);
    for (std::size_t i = 0; i < nodes; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < nodes; ++j) {
            const double a = alpha[i * nodes + j];
            if (!(a >= 0.0)) fail(ErrorKind::contract, "node_importance: negative or non-finite attention weight");
            row += a;
            imp[j] += a;
        }
        if (std::abs(row - 1.0) > 1e-5) {
            fail(ErrorKind::contract, "node_importance: attention row " + std::to_string(i) + " sums to " +
                                          std::to_string(row));
        }
    }
    return imp;
}

DatasetImportance dataset_importance(const ModelState& state, std::span<const WindowSample* const> samples,
                                     std::size_t batch_size) {
    if (samples.empty()) fail(ErrorKind::contract, "dataset_importance: no samples");
    if (batch_size == 0) batch_size = samples.size();
    const std::size_t N = state.config.nodes;
    DatasetImportance out;
    out.mean.assign(N, 0.0);
    out.argmax_counts.assign(N, 0);
    out.samples = samples.size();
    NoGradGuard no_grad;
    for (std::size_t at = 0; at < samples.size(); at += batch_size) {
        const auto chunk = samples.subspan(at, std::min(batch_size, samples.size() - at));
        const auto out_b = forward(state, chunk);
        const auto att = out_b.attention.data();
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            const auto imp = node_importance(att.subspan(b * N * N, N * N), N);
            for (std::size_t j = 0; j < N; ++j) out.mean[j] += imp[j];
            ++out.argmax_counts[static_cast<std::size_t>(std::max_element(imp.begin(), imp.end()) - imp.begin())];
        }
    }
    for (auto& m : out.mean) m /= static_cast<double>(samples.size());
    return out;
}

const char* to_string(AblationMode mode) { return mode == AblationMode::zeros ? "zeros" : "random"; }

WindowSample ablate(const WindowSample& sample, std::size_t node, AblationMode mode, std::uint64_t seed) {
    if (node >= sample.node_count()) {
        fail(ErrorKind::index, "ablate: node " + std::to_string(node) + " out of range for " +
                                   std::to_string(sample.node_count()) + " nodes");
    }
    WindowSample out = sample;
    auto& t = out.nodes[node];
    if (mode == AblationMode::zeros) {
        std::fill(t.begin(), t.end(), 0.0f);
        return out;
    }
    std::mt19937_64 rng(seed);
    const std::size_t n = t.size() / 2;
    for (std::size_t ch = 0; ch < 2; ++ch) {
        double mean = 0.0, var = 0.0;
        for (std::size_t i = 0; i < n; ++i) mean += t[2 * i + ch];
        mean /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) var += (t[2 * i + ch] - mean) * (t[2 * i + ch] - mean);
        const double sd = std::sqrt(var / static_cast<double>(n));
        std::normal_distribution<double> g(mean, sd);
        for (std::size_t i = 0; i < n; ++i) t[2 * i + ch] = static_cast<float>(sd > 0.0 ? g(rng) : mean);
    }
    return out;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2)
        fail(ErrorKind::dimension, "spearman: need two equally long series of at least two values");
    const auto ra = average_ranks(a), rb = average_ranks(b);
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
    const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        sab += (ra[i] - ma) * (rb[i] - mb);
        saa += (ra[i] - ma) * (ra[i] - ma);
        sbb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

AblationStudy importance_ablation_study(const ModelState& state, std::span<const WindowSample* const> samples,
                                        std::uint64_t seed, std::size_t batch_size) {
    if (samples.empty()) fail(ErrorKind::contract, "ablation study: no samples");
    const std::size_t N = state.config.nodes;
    AblationStudy study;
    study.samples = samples.size();
    study.baseline = evaluate(state, samples, nullptr, batch_size).accuracy;
    study.importance = dataset_importance(state, samples, batch_size);

    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return study.importance.mean[a] > study.importance.mean[b]; });
    std::vector<std::size_t> rank(N);
    for (std::size_t r = 0; r < N; ++r) rank[order[r]] = r + 1;

    std::vector<double> drop_zero, drop_random;
    for (std::size_t j = 0; j < N; ++j) {
        for (AblationMode mode : {AblationMode::zeros, AblationMode::random}) {
            std::vector<WindowSample> ablated;
            ablated.reserve(samples.size());
            for (std::size_t i = 0; i < samples.size(); ++i)
                ablated.push_back(ablate(*samples[i], j, mode, detail::mix_seed(seed, j, i, 0x61626c74ULL)));
            std::vector<const WindowSample*> ptrs;
            for (const auto& s : ablated) ptrs.push_back(&s);
            AblationRow row;
            row.node = j;
            row.mode = mode;
            row.importance = study.importance.mean[j];
            row.argmax_count = study.importance.argmax_counts[j];
            row.rank = rank[j];
            row.accuracy = evaluate(state, ptrs, nullptr, batch_size).accuracy;
            row.drop = study.baseline - row.accuracy;
            (mode == AblationMode::zeros ? drop_zero : drop_random).push_back(row.drop);
            study.rows.push_back(row);
        }
    }
    if (N >= 2) {
        study.spearman_zero = spearman(study.importance.mean, drop_zero);
        study.spearman_random = spearman(study.importance.mean, drop_random);
    }
    return study;
}

std::string to_csv(const AblationStudy& study) {
    std::ostringstream os;
    os.precision(10);
    os << "node,mode,importance,argmax_count,rank,accuracy,baseline_acc,drop\n";
    os << "none,none,,,," << study.baseline << ',' << study.baseline << ",0\n";
    for (const auto& r : study.rows) {
        os << r.node << ',' << to_string(r.mode) << ',' << r.importance << ',' << r.argmax_count << ',' << r.rank << ','
           << r.accuracy << ',' << study.baseline << ',' << r.drop << '\n';
    }
    return os.str();
}

}  // namespace radarfuse
