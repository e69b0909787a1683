#pragma once

// Independent reference computations used by the unit and acceptance suites.
// Nothing in here calls into the differentiable ops it is meant to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "radarfuse/tensor.hpp"

namespace radarfuse::oracle {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
    std::uniform_real_distribution<double> u(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = u(rng);
    return Tensor::from_data(std::move(shape), std::move(v), requires_grad);
}

// Scalar <y, w> for a fixed weight tensor w of y's size. Gives every output
// element a distinct upstream gradient in gradient checks.
inline Tensor weighted_sum(const Tensor& y, const Tensor& w) {
    const std::size_t n = y.numel();
    return sum(linear(reshape(y, {1, n}), reshape(w, {n, 1})));
}

// Relative error with a floor on the denominator so vanishing gradients are
// compared on an absolute scale.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Central differences of loss() with respect to selected entries of param.
// loss() must rebuild its forward pass from the current parameter values.
inline std::vector<double> central_difference(const std::function<double()>& loss, Tensor& param,
                                              std::span<const std::size_t> indices, double h = 1e-5) {
    std::vector<double> out;
    out.reserve(indices.size());
    auto values = param.data_mut();
    for (std::size_t idx : indices) {
        const double saved = values[idx];
        values[idx] = saved + h;
        const double up = loss();
        values[idx] = saved - h;
        const double down = loss();
        values[idx] = saved;
        out.push_back((up - down) / (2.0 * h));
    }
    return out;
}

// Worst relative error between backward() and central differences over every
// entry of each tensor in params.
inline double max_gradient_error(const std::function<Tensor()>& build_loss, std::vector<Tensor> params,
                                 double h = 1e-5) {
    for (auto& p : params) p.zero_grad();
    build_loss().backward();
    double worst = 0.0;
    for (auto& p : params) {
        std::vector<double> analytic(p.grad().begin(), p.grad().end());
        if (analytic.empty()) analytic.assign(p.numel(), 0.0);
        std::vector<std::size_t> idx(p.numel());
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        auto numeric = central_difference([&] { return build_loss().item(); }, p, idx, h);
        for (std::size_t i = 0; i < idx.size(); ++i) worst = std::max(worst, relative_error(analytic[i], numeric[i]));
    }
    return worst;
}

struct SampledGradientCheck {
    double worst = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // coordinates with a ReLU kink within reach of the probe
};

// Central differences on `count` coordinates drawn uniformly over all entries
// of params, compared with one backward() pass. A coordinate whose central
// differences at h and h/2 disagree by more than kink_tolerance sits next to a
// non-differentiable point; it is counted as skipped and another is drawn.
inline SampledGradientCheck sampled_gradient_check(const std::function<Tensor()>& build_loss, std::vector<Tensor> params,
                                                   std::size_t count, std::mt19937_64& rng, double h = 1e-5,
                                                   double kink_tolerance = 1e-4) {
    for (auto& p : params) p.zero_grad();
    build_loss().backward();
    std::vector<std::vector<double>> analytic;
    std::size_t total = 0;
    for (auto& p : params) {
        analytic.emplace_back(p.grad().begin(), p.grad().end());
        if (analytic.back().empty()) analytic.back().assign(p.numel(), 0.0);
        total += p.numel();
    }
    std::uniform_int_distribution<std::size_t> pick(0, total - 1);
    SampledGradientCheck out;
    const auto loss = [&] { return build_loss().item(); };
    while (out.checked < count && out.skipped < 10 * count) {
        std::size_t flat = pick(rng), which = 0;
        while (flat >= params[which].numel()) flat -= params[which++].numel();
        const std::size_t idx[] = {flat};
        const double coarse = central_difference(loss, params[which], idx, h)[0];
        const double fine = central_difference(loss, params[which], idx, h / 2)[0];
        if (relative_error(coarse, fine) > kink_tolerance) {
            ++out.skipped;
            continue;
        }
        out.worst = std::max(out.worst, relative_error(analytic[which][flat], fine));
        ++out.checked;
    }
    return out;
}

// Six nested loops straight from the definition of a zero-padded, stride-1
// cross-correlation on a single [C,H,W] image.
inline std::vector<double> conv2d_nested_loops(std::span<const double> x, std::size_t cin, std::size_t h,
                                               std::size_t w, std::span<const double> k, std::size_t cout,
                                               std::size_t kh, std::size_t kw, std::span<const double> bias,
                                               std::size_t ph, std::size_t pw) {
    const std::size_t oh = h + 2 * ph - kh + 1, ow = w + 2 * pw - kw + 1;
    std::vector<double> out(cout * oh * ow, 0.0);
    for (std::size_t co = 0; co < cout; ++co)
        for (std::size_t i = 0; i < oh; ++i)
            for (std::size_t j = 0; j < ow; ++j) {
                double acc = bias.empty() ? 0.0 : bias[co];
                for (std::size_t ci = 0; ci < cin; ++ci)
                    for (std::size_t a = 0; a < kh; ++a)
                        for (std::size_t b = 0; b < kw; ++b) {
                            const long r = static_cast<long>(i + a) - static_cast<long>(ph);
                            const long c = static_cast<long>(j + b) - static_cast<long>(pw);
                            if (r < 0 || c < 0 || r >= static_cast<long>(h) || c >= static_cast<long>(w)) continue;
                            acc += k[((co * cin + ci) * kh + a) * kw + b] * x[(ci * h + r) * w + c];
                        }
                out[(co * oh + i) * ow + j] = acc;
            }
    return out;
}

// Supervised contrastive loss evaluated term by term as written: for every
// anchor i and positive j, -log(exp(z_i.z_j/tau) / sum_{k != i} exp(z_i.z_k/tau)).
inline double supcon_double_loop(const std::vector<std::vector<double>>& z, const std::vector<int>& labels,
                                 double tau) {
    const std::size_t b = z.size();
    auto dot = [&](std::size_t i, std::size_t j) {
        double s = 0.0;
        for (std::size_t d = 0; d < z[i].size(); ++d) s += z[i][d] * z[j][d];
        return s;
    };
    double total = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        std::vector<std::size_t> pos;
        for (std::size_t j = 0; j < b; ++j)
            if (j != i && labels[j] == labels[i]) pos.push_back(j);
        if (pos.empty()) continue;
        double denom = 0.0;
        for (std::size_t k = 0; k < b; ++k)
            if (k != i) denom += std::exp(dot(i, k) / tau);
        double inner = 0.0;
        for (std::size_t j : pos) inner += std::log(std::exp(dot(i, j) / tau) / denom);
        total += -inner / static_cast<double>(pos.size());
    }
    return total / static_cast<double>(b);
}

}  // namespace radarfuse::oracle
