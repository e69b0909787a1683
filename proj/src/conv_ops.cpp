#include <algorithm>
#include <cmath>
#include <cstring>

#include "radarfuse/error.hpp"
#include "radarfuse/tensor.hpp"

namespace radarfuse {

namespace {

struct Image4 {
    std::size_t batch, channels, height, width;
};

constexpr std::size_t kChunk = 8;

// Eight doubles held in registers; the auto-vectorizer leaves the unrolled
// scalar form alone, so spell the lanes out.
typedef double Lane2 __attribute__((vector_size(16)));

struct Chunk {
    Lane2 v[kChunk / 2];

    static Chunk splat(double a) {
        Chunk c;
        for (auto& l : c.v) l = Lane2{a, a};
        return c;
    }
    void axpy(double w, const double* src) {
        const Lane2 wv{w, w};
        for (std::size_t k = 0; k < kChunk / 2; ++k) {
            Lane2 x;
            std::memcpy(&x, src + 2 * k, sizeof x);
            v[k] += wv * x;
        }
    }
    void store(double* dst) const { std::memcpy(dst, v, sizeof v); }
};

double dot(const double* a, const double* b, std::size_t n) {
    Lane2 s[4] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        for (std::size_t k = 0; k < 4; ++k) {
            Lane2 x, y;
            std::memcpy(&x, a + i + 2 * k, sizeof x);
            std::memcpy(&y, b + i + 2 * k, sizeof y);
            s[k] += x * y;
        }
    const Lane2 t = (s[0] + s[1]) + (s[2] + s[3]);
    double r = t[0] + t[1];
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

Image4 as_image(const Tensor& x, const char* op) {
    if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
    if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
    fail(ErrorKind::dimension, std::string(op) + ": expected [B,C,H,W] or [C,H,W], got " + shape_str(x.shape()));
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, Padding padding) {
    const Image4 in = as_image(x, "conv2d");
    if (kernels.rank() != 4 || kernels.dim(1) != in.channels) {
        fail(ErrorKind::dimension, "conv2d: kernels " + shape_str(kernels.shape()) + " incompatible with input " +
                                       shape_str(x.shape()));
    }
    const std::size_t cout = kernels.dim(0), kh = kernels.dim(2), kw = kernels.dim(3);
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != cout)) {
        fail(ErrorKind::dimension, "conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                                       std::to_string(cout) + " output channels");
    }
    const auto out_h_signed = static_cast<long>(in.height + 2 * padding.h) - static_cast<long>(kh) + 1;
    const auto out_w_signed = static_cast<long>(in.width + 2 * padding.w) - static_cast<long>(kw) + 1;
    if (out_h_signed < 1 || out_w_signed < 1) {
        fail(ErrorKind::dimension, "conv2d: non-positive output extent for input " + shape_str(x.shape()) +
                                       " with kernel " + std::to_string(kh) + "x" + std::to_string(kw));
    }
    const auto oh_n = static_cast<std::size_t>(out_h_signed);
    const auto ow_n = static_cast<std::size_t>(out_w_signed);
    const std::size_t cin = in.channels, H = in.height, W = in.width;
    const std::size_t Hp = H + 2 * padding.h, Wp = W + 2 * padding.w;
    // Work in the padded row pitch Wp: tap (ki, kj) then reads the flat padded
    // plane at offset ki * Wp + kj, and columns ow >= ow_n are scratch.
    const std::size_t span = (oh_n - 1) * Wp + ow_n;

    // Outputs are produced in register-sized chunks of kChunk; buffers carry
    // kChunk of zero slack so the last chunk may run past span.
    const std::size_t plane_p = Hp * Wp;
    const std::size_t span_r = (span + kChunk - 1) / kChunk * kChunk;

    auto pad_planes = [=](const double* src, double* dst) {
        std::fill(dst, dst + cin * plane_p + kChunk, 0.0);
        for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t r = 0; r < H; ++r)
                std::copy_n(src + (c * H + r) * W, W, dst + (c * Hp + r + padding.h) * Wp + padding.w);
    };

    std::vector<double> out(in.batch * cout * oh_n * ow_n, 0.0);
    const double* xd = x.data().data();
    const double* kd = kernels.data().data();
    std::vector<double> xp(cin * plane_p + span_r), acc(span_r);
    for (std::size_t b = 0; b < in.batch; ++b) {
        pad_planes(xd + b * cin * H * W, xp.data());
        for (std::size_t co = 0; co < cout; ++co) {
            const double b0 = bias.defined() ? bias.data()[co] : 0.0;
            const double* kco = kd + co * cin * kh * kw;
            for (std::size_t i0 = 0; i0 < span; i0 += kChunk) {
                Chunk r = Chunk::splat(b0);
                for (std::size_t ci = 0; ci < cin; ++ci)
                    for (std::size_t ki = 0; ki < kh; ++ki)
                        for (std::size_t kj = 0; kj < kw; ++kj) {
                            const double w = kco[(ci * kh + ki) * kw + kj];
                            const double* src = xp.data() + ci * plane_p + ki * Wp + kj + i0;
                            r.axpy(w, src);
                        }
                r.store(acc.data() + i0);
            }
            double* plane = out.data() + (b * cout + co) * oh_n * ow_n;
            for (std::size_t r = 0; r < oh_n; ++r) std::copy_n(acc.data() + r * Wp, ow_n, plane + r * ow_n);
        }
    }

    Shape out_shape = x.rank() == 4 ? Shape{in.batch, cout, oh_n, ow_n} : Shape{cout, oh_n, ow_n};
    auto nx = node_of(x), nk = node_of(kernels), nb = bias.defined() ? node_of(bias) : nullptr;
    return make_op_result(std::move(out_shape), std::move(out), {x, kernels, bias},
                          [=](detail::Node& self) {
        std::vector<double>* gx = nx->requires_grad ? &nx->ensure_grad() : nullptr;
        std::vector<double>* gk = nk->requires_grad ? &nk->ensure_grad() : nullptr;
        std::vector<double>* gb = (nb && nb->requires_grad) ? &nb->ensure_grad() : nullptr;
        const double* dy = self.grad.data();
        const double* kv = nk->value.data();
        // dy in padded pitch, shifted by lead zeros so the input gradient is a
        // gather: gxp[p] = sum over taps of w * dyl[p + lead - ki*Wp - kj].
        const std::size_t lead = (kh - 1) * Wp + (kw - 1);
        const std::size_t dstride = lead + plane_p + kChunk;
        const std::size_t gx_r = (plane_p + kChunk - 1) / kChunk * kChunk;
        std::vector<double> xp(gk ? cin * plane_p + span_r : 0), dyl(cout * dstride, 0.0), gxp(gx_r);
        for (std::size_t b = 0; b < in.batch; ++b) {
            if (gk) pad_planes(nx->value.data() + b * cin * H * W, xp.data());
            for (std::size_t co = 0; co < cout; ++co) {
                const double* dplane = dy + (b * cout + co) * oh_n * ow_n;
                if (gb) {
                    double s = 0.0;
                    for (std::size_t i = 0; i < oh_n * ow_n; ++i) s += dplane[i];
                    (*gb)[co] += s;
                }
                // scratch columns stay zero so they contribute nothing below
                double* dst = dyl.data() + co * dstride + lead;
                for (std::size_t r = 0; r < oh_n; ++r) std::copy_n(dplane + r * ow_n, ow_n, dst + r * Wp);
            }
            if (gk) {
                for (std::size_t co = 0; co < cout; ++co) {
                    const double* d = dyl.data() + co * dstride + lead;
                    for (std::size_t ci = 0; ci < cin; ++ci)
                        for (std::size_t ki = 0; ki < kh; ++ki)
                            for (std::size_t kj = 0; kj < kw; ++kj) {
                                const double* xs = xp.data() + ci * plane_p + ki * Wp + kj;
                                (*gk)[((co * cin + ci) * kh + ki) * kw + kj] += dot(d, xs, span);
                            }
                }
            }
            if (gx) {
                double* gdst = gx->data() + b * cin * H * W;
                for (std::size_t ci = 0; ci < cin; ++ci) {
                    // only the unpadded interior of gxp is kept
                    const std::size_t p_lo = padding.h * Wp / kChunk * kChunk;
                    const std::size_t p_hi = std::min(gx_r, (padding.h + H) * Wp);
                    for (std::size_t p0 = p_lo; p0 < p_hi; p0 += kChunk) {
                        Chunk r = Chunk::splat(0.0);
                        for (std::size_t co = 0; co < cout; ++co) {
                            const double* kc = kv + (co * cin + ci) * kh * kw;
                            const double* d = dyl.data() + co * dstride + lead + p0;
                            for (std::size_t ki = 0; ki < kh; ++ki)
                                for (std::size_t kj = 0; kj < kw; ++kj) {
                                    const double w = kc[ki * kw + kj];
                                    const double* src = d - ki * Wp - kj;
                                    r.axpy(w, src);
                                }
                        }
                        r.store(gxp.data() + p0);
                    }
                    for (std::size_t r = 0; r < H; ++r) {
                        const double* src = gxp.data() + (r + padding.h) * Wp + padding.w;
                        double* g = gdst + (ci * H + r) * W;
                        for (std::size_t k = 0; k < W; ++k) g[k] += src[k];
                    }
                }
            }
        }
    });
}

namespace {

void check_bn_params(const Image4& in, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                     const BatchNormStats& stats) {
    if (x.rank() != 4) fail(ErrorKind::dimension, "batchnorm2d: expected [B,C,H,W], got " + shape_str(x.shape()));
    const auto c = in.channels;
    if (gamma.numel() != c || beta.numel() != c || stats.running_mean.size() != c || stats.running_var.size() != c) {
        fail(ErrorKind::dimension, "batchnorm2d: parameter extents do not match " + std::to_string(c) + " channels of " +
                                       shape_str(x.shape()));
    }
}

// y = scale_c * x + shift_c per channel with gradients for x, gamma and beta.
// xhat is needed for gamma's gradient; inv_std for x's.
Tensor bn_apply(const Tensor& x, const Tensor& gamma, const Tensor& beta, const Image4& in,
                std::vector<double> mean, std::vector<double> inv_std, bool batch_stats) {
    const std::size_t plane = in.height * in.width;
    const std::size_t n = in.batch * plane;
    std::vector<double> out(x.numel());
    const auto xd = x.data();
    const auto gd = gamma.data();
    const auto bd = beta.data();
    for (std::size_t b = 0; b < in.batch; ++b)
        for (std::size_t c = 0; c < in.channels; ++c) {
            const std::size_t off = (b * in.channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i)
                out[off + i] = gd[c] * (xd[off + i] - mean[c]) * inv_std[c] + bd[c];
        }
    auto nx = node_of(x), ng = node_of(gamma), nbeta = node_of(beta);
    return make_op_result(x.shape(), std::move(out), {x, gamma, beta},
                          [=, mean = std::move(mean), inv_std = std::move(inv_std)](detail::Node& self) {
        std::vector<double> sum_dy(in.channels, 0.0), sum_dy_xhat(in.channels, 0.0);
        for (std::size_t b = 0; b < in.batch; ++b)
            for (std::size_t c = 0; c < in.channels; ++c) {
                const std::size_t off = (b * in.channels + c) * plane;
                for (std::size_t i = 0; i < plane; ++i) {
                    const double xhat = (nx->value[off + i] - mean[c]) * inv_std[c];
                    sum_dy[c] += self.grad[off + i];
                    sum_dy_xhat[c] += self.grad[off + i] * xhat;
                }
            }
        if (ng->requires_grad) {
            auto& g = ng->ensure_grad();
            for (std::size_t c = 0; c < in.channels; ++c) g[c] += sum_dy_xhat[c];
        }
        if (nbeta->requires_grad) {
            auto& g = nbeta->ensure_grad();
            for (std::size_t c = 0; c < in.channels; ++c) g[c] += sum_dy[c];
        }
        if (!nx->requires_grad) return;
        auto& gx = nx->ensure_grad();
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t b = 0; b < in.batch; ++b)
            for (std::size_t c = 0; c < in.channels; ++c) {
                const std::size_t off = (b * in.channels + c) * plane;
                const double g = ng->value[c] * inv_std[c];
                for (std::size_t i = 0; i < plane; ++i) {
                    const double dy = self.grad[off + i];
                    if (batch_stats) {
                        const double xhat = (nx->value[off + i] - mean[c]) * inv_std[c];
                        gx[off + i] += g * (dy - inv_n * sum_dy[c] - xhat * inv_n * sum_dy_xhat[c]);
                    } else {
                        gx[off + i] += g * dy;
                    }
                }
            }
    });
}

}  // namespace

Tensor batchnorm2d_train(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats) {
    const Image4 in = as_image(x, "batchnorm2d");
    check_bn_params(in, x, gamma, beta, stats);
    const std::size_t plane = in.height * in.width;
    const std::size_t n = in.batch * plane;
    if (n == 1) {
        fail(ErrorKind::degenerate, "batchnorm2d: train mode needs more than one value per channel, got " +
                                        shape_str(x.shape()));
    }
    std::vector<double> mean(in.channels, 0.0), var(in.channels, 0.0), inv_std(in.channels);
    const auto xd = x.data();
    for (std::size_t b = 0; b < in.batch; ++b)
        for (std::size_t c = 0; c < in.channels; ++c) {
            const std::size_t off = (b * in.channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) mean[c] += xd[off + i];
        }
    for (auto& m : mean) m /= static_cast<double>(n);
    for (std::size_t b = 0; b < in.batch; ++b)
        for (std::size_t c = 0; c < in.channels; ++c) {
            const std::size_t off = (b * in.channels + c) * plane;
            for (std::size_t i = 0; i < plane; ++i) {
                const double d = xd[off + i] - mean[c];
                var[c] += d * d;
            }
        }
    for (std::size_t c = 0; c < in.channels; ++c) {
        var[c] /= static_cast<double>(n);
        inv_std[c] = 1.0 / std::sqrt(var[c] + stats.eps);
        const double unbiased = var[c] * static_cast<double>(n) / static_cast<double>(n - 1);
        stats.running_mean[c] = (1.0 - stats.momentum) * stats.running_mean[c] + stats.momentum * mean[c];
        stats.running_var[c] = (1.0 - stats.momentum) * stats.running_var[c] + stats.momentum * unbiased;
    }
    return bn_apply(x, gamma, beta, in, std::move(mean), std::move(inv_std), true);
}

Tensor batchnorm2d_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta, const BatchNormStats& stats) {
    const Image4 in = as_image(x, "batchnorm2d");
    check_bn_params(in, x, gamma, beta, stats);
    std::vector<double> inv_std(in.channels);
    for (std::size_t c = 0; c < in.channels; ++c) inv_std[c] = 1.0 / std::sqrt(stats.running_var[c] + stats.eps);
    return bn_apply(x, gamma, beta, in, stats.running_mean, std::move(inv_std), false);
}

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode) {
    return mode == Mode::train ? batchnorm2d_train(x, gamma, beta, stats) : batchnorm2d_infer(x, gamma, beta, stats);
}

Tensor adaptive_avg_pool2d(const Tensor& x, std::size_t out_h, std::size_t out_w) {
    const Image4 in = as_image(x, "adaptive_avg_pool2d");
    if (out_h == 0 || out_w == 0 || out_h > in.height || out_w > in.width) {
        fail(ErrorKind::dimension, "adaptive_avg_pool2d: cannot pool " + shape_str(x.shape()) + " to " +
                                       std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    auto bounds = [](std::size_t i, std::size_t in_extent, std::size_t out_extent) {
        return std::pair<std::size_t, std::size_t>{i * in_extent / out_extent, (i + 1) * in_extent / out_extent};
    };
    const std::size_t planes = in.batch * in.channels;
    std::vector<double> out(planes * out_h * out_w, 0.0);
    const auto xd = x.data();
    for (std::size_t p = 0; p < planes; ++p)
        for (std::size_t i = 0; i < out_h; ++i) {
            const auto [h0, h1] = bounds(i, in.height, out_h);
            for (std::size_t j = 0; j < out_w; ++j) {
                const auto [w0, w1] = bounds(j, in.width, out_w);
                double acc = 0.0;
                for (std::size_t h = h0; h < h1; ++h)
                    for (std::size_t w = w0; w < w1; ++w) acc += xd[(p * in.height + h) * in.width + w];
                out[(p * out_h + i) * out_w + j] = acc / static_cast<double>((h1 - h0) * (w1 - w0));
            }
        }
    Shape out_shape = x.rank() == 4 ? Shape{in.batch, in.channels, out_h, out_w} : Shape{in.channels, out_h, out_w};
    auto nx = node_of(x);
    return make_op_result(std::move(out_shape), std::move(out), {x}, [=](detail::Node& self) {
        auto& g = nx->ensure_grad();
        for (std::size_t p = 0; p < planes; ++p)
            for (std::size_t i = 0; i < out_h; ++i) {
                const auto [h0, h1] = bounds(i, in.height, out_h);
                for (std::size_t j = 0; j < out_w; ++j) {
                    const auto [w0, w1] = bounds(j, in.width, out_w);
                    const double share = self.grad[(p * out_h + i) * out_w + j] / static_cast<double>((h1 - h0) * (w1 - w0));
                    for (std::size_t h = h0; h < h1; ++h)
                        for (std::size_t w = w0; w < w1; ++w) g[(p * in.height + h) * in.width + w] += share;
                }
            }
    });
}

}  // namespace radarfuse
