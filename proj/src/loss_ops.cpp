#include <algorithm>
#include <cmath>

#include "radarfuse/error.hpp"
#include "radarfuse/tensor.hpp"

namespace radarfuse {

Tensor cross_entropy(const Tensor& probs, std::span<const int> labels) {
    if (probs.rank() != 2 || probs.dim(0) != labels.size() || labels.empty()) {
        fail(ErrorKind::dimension, "cross_entropy: probabilities " + shape_str(probs.shape()) + " vs " +
                                       std::to_string(labels.size()) + " labels");
    }
    const std::size_t batch = probs.dim(0), classes = probs.dim(1);
    for (int y : labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= classes) {
            fail(ErrorKind::label, "cross_entropy: label " + std::to_string(y) + " outside [0," + std::to_string(classes) + ")");
        }
    }
    const auto pd = probs.data();
    double total = 0.0;
    for (std::size_t i = 0; i < batch; ++i) total -= std::log(std::max(pd[i * classes + labels[i]], kProbabilityFloor));
    std::vector<int> ys(labels.begin(), labels.end());
    auto np = node_of(probs);
    return make_op_result({1}, {total / static_cast<double>(batch)}, {probs},
                          [np, ys = std::move(ys), batch, classes](detail::Node& self) {
        auto& g = np->ensure_grad();
        const double upstream = self.grad[0] / static_cast<double>(batch);
        for (std::size_t i = 0; i < batch; ++i) {
            const std::size_t idx = i * classes + ys[i];
            const double p = np->value[idx];
            if (p > kProbabilityFloor) g[idx] -= upstream / p;
        }
    });
}

Tensor supervised_contrastive(const Tensor& z, std::span<const int> labels, double tau) {
    if (!(tau > 0.0)) fail(ErrorKind::contract, "supervised_contrastive: temperature must be positive");
    if (z.rank() != 2 || z.dim(0) != labels.size() || labels.empty()) {
        fail(ErrorKind::dimension, "supervised_contrastive: embeddings " + shape_str(z.shape()) + " vs " +
                                       std::to_string(labels.size()) + " labels");
    }
    const std::size_t batch = z.dim(0), width = z.dim(1);
    const auto zd = z.data();
    for (std::size_t i = 0; i < batch; ++i) {
        double sq = 0.0;
        for (std::size_t k = 0; k < width; ++k) sq += zd[i * width + k] * zd[i * width + k];
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-4) {
            fail(ErrorKind::contract, "supervised_contrastive: row " + std::to_string(i) + " has norm " +
                                          std::to_string(std::sqrt(sq)) + ", expected unit length");
        }
    }

    // sim[i,k] = z_i . z_k / tau
    std::vector<double> sim(batch * batch, 0.0);
    for (std::size_t i = 0; i < batch; ++i)
        for (std::size_t k = 0; k < batch; ++k) {
            double dot = 0.0;
            for (std::size_t d = 0; d < width; ++d) dot += zd[i * width + d] * zd[k * width + d];
            sim[i * batch + k] = dot / tau;
        }

    // dL/dsim, filled alongside the loss so backward only needs to chain through the dot products.
    std::vector<double> dsim(batch * batch, 0.0);
    double total = 0.0;
    const double inv_b = 1.0 / static_cast<double>(batch);
    for (std::size_t i = 0; i < batch; ++i) {
        std::size_t positives = 0;
        for (std::size_t j = 0; j < batch; ++j)
            if (j != i && labels[j] == labels[i]) ++positives;
        if (positives == 0) continue;

        double peak = -INFINITY;
        for (std::size_t k = 0; k < batch; ++k)
            if (k != i) peak = std::max(peak, sim[i * batch + k]);
        double denom = 0.0;
        for (std::size_t k = 0; k < batch; ++k)
            if (k != i) denom += std::exp(sim[i * batch + k] - peak);
        const double log_denom = peak + std::log(denom);

        const double inv_p = 1.0 / static_cast<double>(positives);
        double anchor = 0.0;
        for (std::size_t j = 0; j < batch; ++j)
            if (j != i && labels[j] == labels[i]) anchor -= inv_p * (sim[i * batch + j] - log_denom);
        total += anchor;

        for (std::size_t k = 0; k < batch; ++k) {
            if (k == i) continue;
            const double soft = std::exp(sim[i * batch + k] - log_denom);
            const double pos = labels[k] == labels[i] ? inv_p : 0.0;
            dsim[i * batch + k] = inv_b * (soft - pos);
        }
    }

    auto nz = node_of(z);
    return make_op_result({1}, {total * inv_b}, {z}, [nz, dsim = std::move(dsim), batch, width, tau](detail::Node& self) {
        auto& g = nz->ensure_grad();
        const double up = self.grad[0] / tau;
        for (std::size_t i = 0; i < batch; ++i)
            for (std::size_t k = 0; k < batch; ++k) {
                const double c = up * dsim[i * batch + k];
                if (c == 0.0) continue;
                for (std::size_t d = 0; d < width; ++d) {
                    g[i * width + d] += c * nz->value[k * width + d];
                    g[k * width + d] += c * nz->value[i * width + d];
                }
            }
    });
}

}  // namespace radarfuse
