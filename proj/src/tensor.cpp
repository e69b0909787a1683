#include "radarfuse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "radarfuse/error.hpp"

namespace radarfuse {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::contract: return "contract";
        case ErrorKind::index: return "index";
        case ErrorKind::label: return "label";
        case ErrorKind::range: return "range";
        case ErrorKind::bounds: return "bounds";
        case ErrorKind::parse: return "parse";
        case ErrorKind::io: return "io";
        case ErrorKind::config: return "config";
        case ErrorKind::split: return "split";
        case ErrorKind::numeric: return "numeric";
        case ErrorKind::degenerate: return "degenerate";
    }
    return "unknown";
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

// ---- Tensor -------------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    std::vector<double> data(shape_numel(shape), value);
    return from_data(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        fail(ErrorKind::dimension, "tensor data length " + std::to_string(data.size()) +
                                       " does not match shape " + shape_str(shape));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_data({1}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= rank()) fail(ErrorKind::dimension, "axis " + std::to_string(axis) + " out of range for " + shape_str(shape()));
    return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->value.size(); }
std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::data_mut() { return node_->value; }

double Tensor::item() const {
    if (numel() != 1) fail(ErrorKind::contract, "item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::grad_mut() { return node_->ensure_grad(); }
void Tensor::zero_grad() { node_->grad.clear(); }
void Tensor::retain_grad() { node_->retain_grad = true; }

Tensor Tensor::detach() const { return from_data(shape(), node_->value, false); }

Tensor Tensor::clone() const { return from_data(shape(), node_->value, node_->requires_grad); }

void Tensor::backward() const {
    if (!defined() || numel() != 1) {
        fail(ErrorKind::contract, "backward() requires a scalar loss, got shape " +
                                      (defined() ? shape_str(shape()) : std::string("<undefined>")));
    }
    if (!node_->requires_grad) return;

    // Iterative post-order DFS; the result lists every input before its consumers.
    std::vector<detail::Node*> order;
    std::unordered_set<const detail::Node*> visited;
    std::vector<std::pair<detail::Node*, std::size_t>> stack;
    stack.emplace_back(node_.get(), 0);
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            detail::Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    node_->ensure_grad()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node& node = **it;
        if (!node.backward_fn) continue;
        if (node.grad.empty()) continue;  // no path from the loss contributed here
        node.backward_fn(node);
        if (!node.retain_grad && &node != node_.get()) {
            node.grad.clear();
            node.grad.shrink_to_fit();
        }
    }
}

namespace {
thread_local int no_grad_depth = 0;
}

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_recording() { return no_grad_depth == 0; }

Tensor make_op_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backward_fn) {
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    const bool any = no_grad_depth == 0 && std::any_of(inputs.begin(), inputs.end(),
                                 [](const Tensor& t) { return t.defined() && t.requires_grad(); });
    if (any) {
        node->requires_grad = true;
        for (auto& t : inputs)
            if (t.defined()) node->inputs.push_back(t.node_);
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(node));
}

std::shared_ptr<detail::Node> node_of(const Tensor& t) { return t.node_; }

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (!t.defined() || t.rank() != rank) {
        fail(ErrorKind::dimension, std::string(op) + ": expected rank " + std::to_string(rank) + " tensor, got " +
                                       (t.defined() ? shape_str(t.shape()) : std::string("<undefined>")));
    }
}

// Gradient sink for an input: nullptr when that input does not need one.
std::vector<double>* grad_sink(const std::shared_ptr<detail::Node>& n) {
    return (n && n->requires_grad) ? &n->ensure_grad() : nullptr;
}

// c[m,n] += a[m,k] * b[k,n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// c[m,n] += a[m,k] * b[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            c[i * n + j] += acc;
        }
    }
}

// c[k,n] += a[m,k]^T * b[m,n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* brow = b + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k) {
        fail(ErrorKind::dimension, "matmul: inner extents differ for " + shape_str(a.shape()) + " and " +
                                       shape_str(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
    auto na = node_of(a), nb = node_of(b);
    return make_op_result({m, n}, std::move(out), {a, b}, [na, nb, m, k, n](detail::Node& self) {
        if (auto* ga = grad_sink(na)) gemm_nt(self.grad.data(), nb->value.data(), ga->data(), m, n, k);
        if (auto* gb = grad_sink(nb)) gemm_tn(na->value.data(), self.grad.data(), gb->data(), m, k, n);
    });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b) {
    require_rank(a, 3, "bmm");
    require_rank(b, 3, "bmm");
    const std::size_t g = a.dim(0), m = a.dim(1), k = a.dim(2);
    const std::size_t bk = transpose_b ? b.dim(2) : b.dim(1);
    const std::size_t n = transpose_b ? b.dim(1) : b.dim(2);
    if (b.dim(0) != g || bk != k) {
        fail(ErrorKind::dimension, "bmm: incompatible shapes " + shape_str(a.shape()) + " and " +
                                       shape_str(b.shape()) + (transpose_b ? " (b transposed)" : ""));
    }
    std::vector<double> out(g * m * n, 0.0);
    const double* ad = a.data().data();
    const double* bd = b.data().data();
    for (std::size_t i = 0; i < g; ++i) {
        if (transpose_b)
            gemm_nt(ad + i * m * k, bd + i * n * k, out.data() + i * m * n, m, k, n);
        else
            gemm_nn(ad + i * m * k, bd + i * k * n, out.data() + i * m * n, m, k, n);
    }
    auto na = node_of(a), nb = node_of(b);
    return make_op_result({g, m, n}, std::move(out), {a, b}, [na, nb, g, m, k, n, transpose_b](detail::Node& self) {
        auto* ga = grad_sink(na);
        auto* gb = grad_sink(nb);
        for (std::size_t i = 0; i < g; ++i) {
            const double* dc = self.grad.data() + i * m * n;
            const double* av = na->value.data() + i * m * k;
            if (transpose_b) {
                // C = A B^T: dA = dC B, dB = dC^T A
                const double* bv = nb->value.data() + i * n * k;
                if (ga) gemm_nn(dc, bv, ga->data() + i * m * k, m, n, k);
                if (gb) gemm_tn(dc, av, gb->data() + i * n * k, m, n, k);
            } else {
                const double* bv = nb->value.data() + i * k * n;
                if (ga) gemm_nt(dc, bv, ga->data() + i * m * k, m, n, k);
                if (gb) gemm_tn(av, dc, gb->data() + i * k * n, m, k, n);
            }
        }
    });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
    require_rank(x, 2, "linear");
    require_rank(weight, 2, "linear");
    const std::size_t rows = x.dim(0), in = x.dim(1), out = weight.dim(1);
    if (weight.dim(0) != in) {
        fail(ErrorKind::dimension, "linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                                       shape_str(weight.shape()));
    }
    if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out)) {
        fail(ErrorKind::dimension, "linear: bias " + shape_str(bias.shape()) + " does not match output width " +
                                       std::to_string(out));
    }
    std::vector<double> y(rows * out, 0.0);
    if (bias.defined()) {
        for (std::size_t r = 0; r < rows; ++r) std::copy(bias.data().begin(), bias.data().end(), y.begin() + r * out);
    }
    gemm_nn(x.data().data(), weight.data().data(), y.data(), rows, in, out);
    auto nx = node_of(x), nw = node_of(weight), nb = bias.defined() ? node_of(bias) : nullptr;
    return make_op_result({rows, out}, std::move(y), {x, weight, bias}, [nx, nw, nb, rows, in, out](detail::Node& self) {
        if (auto* gx = grad_sink(nx)) gemm_nt(self.grad.data(), nw->value.data(), gx->data(), rows, out, in);
        if (auto* gw = grad_sink(nw)) gemm_tn(nx->value.data(), self.grad.data(), gw->data(), rows, in, out);
        if (auto* gb = grad_sink(nb)) {
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < out; ++j) (*gb)[j] += self.grad[r * out + j];
        }
    });
}

// ---- elementwise and reductions ---------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        fail(ErrorKind::dimension, "add: shapes differ " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<double> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    auto na = node_of(a), nb = node_of(b);
    return make_op_result(a.shape(), std::move(out), {a, b}, [na, nb](detail::Node& self) {
        for (auto* g : {grad_sink(na), grad_sink(nb)}) {
            if (!g) continue;
            for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
        }
    });
}

Tensor scale(const Tensor& x, double factor) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= factor;
    auto nx = node_of(x);
    return make_op_result(x.shape(), std::move(out), {x}, [nx, factor](detail::Node& self) {
        auto& g = nx->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
    });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    auto nx = node_of(x);
    return make_op_result({1}, {total}, {x}, [nx](detail::Node& self) {
        auto& g = nx->ensure_grad();
        for (auto& v : g) v += self.grad[0];
    });
}

namespace {

struct AxisSplit {
    std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
    if (axis >= shape.size()) {
        fail(ErrorKind::dimension, std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
    }
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace

Tensor mean_axis(const Tensor& x, std::size_t axis) {
    const AxisSplit s = split_axis(x.shape(), axis, "mean_axis");
    Shape out_shape = x.shape();
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (out_shape.empty()) out_shape = {1};
    std::vector<double> out(s.outer * s.inner, 0.0);
    const auto xd = x.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t e = 0; e < s.extent; ++e)
            for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += xd[(o * s.extent + e) * s.inner + i];
    for (auto& v : out) v /= static_cast<double>(s.extent);
    auto nx = node_of(x);
    return make_op_result(std::move(out_shape), std::move(out), {x}, [nx, s](detail::Node& self) {
        auto& g = nx->ensure_grad();
        const double inv = 1.0 / static_cast<double>(s.extent);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t e = 0; e < s.extent; ++e)
                for (std::size_t i = 0; i < s.inner; ++i) g[(o * s.extent + e) * s.inner + i] += inv * self.grad[o * s.inner + i];
    });
}

Tensor relu(const Tensor& x) {
    std::vector<double> out(x.data().begin(), x.data().end());
    for (auto& v : out) v = v > 0.0 ? v : 0.0;
    auto nx = node_of(x);
    return make_op_result(x.shape(), std::move(out), {x}, [nx](detail::Node& self) {
        auto& g = nx->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i)
            if (nx->value[i] > 0.0) g[i] += self.grad[i];
    });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    const AxisSplit s = split_axis(x.shape(), axis, "softmax");
    std::vector<double> out(x.numel());
    const auto xd = x.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            double peak = xd[base];
            for (std::size_t e = 1; e < s.extent; ++e) peak = std::max(peak, xd[base + e * s.inner]);
            double total = 0.0;
            for (std::size_t e = 0; e < s.extent; ++e) {
                const double v = std::exp(xd[base + e * s.inner] - peak);
                out[base + e * s.inner] = v;
                total += v;
            }
            for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
        }
    }
    auto nx = node_of(x);
    return make_op_result(x.shape(), std::move(out), {x}, [nx, s](detail::Node& self) {
        auto& g = nx->ensure_grad();
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.extent * s.inner + i;
                double dot = 0.0;
                for (std::size_t e = 0; e < s.extent; ++e) dot += self.grad[base + e * s.inner] * self.value[base + e * s.inner];
                for (std::size_t e = 0; e < s.extent; ++e) {
                    const std::size_t idx = base + e * s.inner;
                    g[idx] += self.value[idx] * (self.grad[idx] - dot);
                }
            }
        }
    });
}

Tensor l2_normalize(const Tensor& x, std::size_t axis) {
    const AxisSplit s = split_axis(x.shape(), axis, "l2_normalize");
    std::vector<double> out(x.numel());
    std::vector<double> norms(s.outer * s.inner);
    const auto xd = x.data();
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.extent * s.inner + i;
            double sq = 0.0;
            for (std::size_t e = 0; e < s.extent; ++e) sq += xd[base + e * s.inner] * xd[base + e * s.inner];
            // zero vectors stay zero
            const double norm = std::max(std::sqrt(sq), 1e-12);
            norms[o * s.inner + i] = norm;
            for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] = xd[base + e * s.inner] / norm;
        }
    }
    auto nx = node_of(x);
    return make_op_result(x.shape(), std::move(out), {x}, [nx, s, norms = std::move(norms)](detail::Node& self) {
        auto& g = nx->ensure_grad();
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t base = o * s.extent * s.inner + i;
                const double norm = norms[o * s.inner + i];
                double dot = 0.0;
                for (std::size_t e = 0; e < s.extent; ++e) dot += self.grad[base + e * s.inner] * self.value[base + e * s.inner];
                for (std::size_t e = 0; e < s.extent; ++e) {
                    const std::size_t idx = base + e * s.inner;
                    g[idx] += (self.grad[idx] - self.value[idx] * dot) / norm;
                }
            }
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        fail(ErrorKind::dimension, "reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    }
    std::vector<double> out(x.data().begin(), x.data().end());
    auto nx = node_of(x);
    return make_op_result(std::move(shape), std::move(out), {x}, [nx](detail::Node& self) {
        auto& g = nx->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    });
}

Tensor flatten(const Tensor& x) {
    if (x.rank() < 2) return reshape(x, {1, x.numel()});
    return reshape(x, {x.dim(0), x.numel() / x.dim(0)});
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
    const Shape& in = x.shape();
    const std::size_t r = in.size();
    std::vector<bool> seen(r, false);
    if (order.size() != r) fail(ErrorKind::dimension, "permute: order length does not match rank of " + shape_str(in));
    for (auto a : order) {
        if (a >= r || seen[a]) fail(ErrorKind::dimension, "permute: invalid axis order for " + shape_str(in));
        seen[a] = true;
    }
    Shape out_shape(r);
    for (std::size_t i = 0; i < r; ++i) out_shape[i] = in[order[i]];

    std::vector<std::size_t> in_strides(r, 1);
    for (std::size_t i = r; i-- > 1;) in_strides[i - 1] = in_strides[i] * in[i];
    // source offset for each destination element, computed once and reused in backward
    std::vector<std::size_t> src(x.numel());
    std::vector<std::size_t> idx(r, 0);
    for (std::size_t flat = 0; flat < src.size(); ++flat) {
        std::size_t off = 0;
        for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[order[i]];
        src[flat] = off;
        for (std::size_t i = r; i-- > 0;) {
            if (++idx[i] < out_shape[i]) break;
            idx[i] = 0;
        }
    }
    std::vector<double> out(src.size());
    const auto xd = x.data();
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = xd[src[i]];
    auto nx = node_of(x);
    return make_op_result(std::move(out_shape), std::move(out), {x}, [nx, src = std::move(src)](detail::Node& self) {
        auto& g = nx->ensure_grad();
        for (std::size_t i = 0; i < src.size(); ++i) g[src[i]] += self.grad[i];
    });
}

Tensor dropout(const Tensor& x, double rate, Mode mode, std::mt19937_64& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) fail(ErrorKind::contract, "dropout: rate must lie in [0,1), got " + std::to_string(rate));
    if (mode == Mode::infer || rate == 0.0) return x;
    std::vector<double> mask(x.numel());
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double keep_scale = 1.0 / (1.0 - rate);
    for (auto& m : mask) m = u(rng) < rate ? 0.0 : keep_scale;
    std::vector<double> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
    auto nx = node_of(x);
    return make_op_result(x.shape(), std::move(out), {x}, [nx, mask = std::move(mask)](detail::Node& self) {
        auto& g = nx->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += mask[i] * self.grad[i];
    });
}

}  // namespace radarfuse
