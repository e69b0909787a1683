#pragma once

// Dense row-major double tensors with tape-free reverse-mode differentiation.
//
// Every op returns a new Tensor whose node remembers its inputs and a closure
// that scatters the output gradient back into them. backward() on a scalar
// orders the reachable nodes topologically and replays the closures in
// reverse. Nodes built only from tensors that do not require gradients carry
// no closure, so inference builds no record at all.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace radarfuse {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

enum class Mode { train, infer };

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    bool retain_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    std::vector<double>& ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
        return grad;
    }
};

}  // namespace detail

class Tensor {
   public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);

    bool defined() const noexcept { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const double> data() const;
    // Mutable access is meant for leaves (parameter updates, test setup).
    std::span<double> data_mut();
    double item() const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    std::span<const double> grad() const;
    std::span<double> grad_mut();
    void zero_grad();
    // Keep this non-leaf tensor's gradient after backward() (dropped otherwise).
    void retain_grad();

    // Seeds d(self)/d(self) = 1 and propagates. Requires a single-element tensor.
    void backward() const;

    // Same values, no history.
    Tensor detach() const;
    // Independent copy of the values that keeps the requires_grad flag.
    Tensor clone() const;

    const detail::Node* id() const noexcept { return node_.get(); }

   private:
    explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node> node_;

    friend Tensor make_op_result(Shape, std::vector<double>, std::vector<Tensor>,
                                 std::function<void(detail::Node&)>);
    friend std::shared_ptr<detail::Node> node_of(const Tensor&);
};

// While alive, ops on this thread record no graph and their results never
// require gradients.
class NoGradGuard {
   public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_recording();

// Builds an op output. When no input requires a gradient the closure and
// inputs are discarded and the result is a plain constant.
Tensor make_op_result(Shape shape, std::vector<double> value, std::vector<Tensor> inputs,
                      std::function<void(detail::Node&)> backward_fn);
std::shared_ptr<detail::Node> node_of(const Tensor& t);

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
// Batched product over the leading axis: [G,m,k] x [G,k,n] (or [G,n,k] with transpose_b).
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_b = false);
// x [R,in] times weight [in,out], plus optional bias [out].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = Tensor());

// ---- elementwise and reductions ---------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor sum(const Tensor& x);
Tensor mean_axis(const Tensor& x, std::size_t axis);
Tensor relu(const Tensor& x);
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor l2_normalize(const Tensor& x, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor flatten(const Tensor& x);  // keeps the leading axis: [B, ...] -> [B, rest]
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
// Inverted dropout; exact identity in infer mode or when rate == 0.
Tensor dropout(const Tensor& x, double rate, Mode mode, std::mt19937_64& rng);

// ---- convolution family -------------------------------------------------------

struct Padding {
    std::size_t h = 0;
    std::size_t w = 0;
};

// Stride-1 cross-correlation with zero padding. x is [B,C,H,W] or [C,H,W];
// kernels [Cout,Cin,kh,kw]; bias [Cout] or undefined.
Tensor conv2d(const Tensor& x, const Tensor& kernels, const Tensor& bias, Padding padding);

struct BatchNormStats {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.1;
    double eps = 1e-5;

    explicit BatchNormStats(std::size_t channels = 0)
        : running_mean(channels, 0.0), running_var(channels, 1.0) {}
};

// Train mode normalizes with batch statistics and updates the running
// averages (unbiased variance); infer mode uses the running averages.
Tensor batchnorm2d_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         BatchNormStats& stats);
Tensor batchnorm2d_infer(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         const BatchNormStats& stats);
Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormStats& stats, Mode mode);

// Averages contiguous floor-partitioned bins: bin i spans
// [floor(i*H/oh), floor((i+1)*H/oh)).
Tensor adaptive_avg_pool2d(const Tensor& x, std::size_t out_h, std::size_t out_w);

// ---- losses -------------------------------------------------------------------

inline constexpr double kProbabilityFloor = 1e-12;

// Mean of -log(max(p[i, y_i], 1e-12)) over rows of probs [B,C].
Tensor cross_entropy(const Tensor& probs, std::span<const int> labels);

// Supervised contrastive loss over L2-normalized rows of z [B,d]. Anchors
// without a same-class partner in the batch contribute zero.
Tensor supervised_contrastive(const Tensor& z, std::span<const int> labels, double tau);

}  // namespace radarfuse
