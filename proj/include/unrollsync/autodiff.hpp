#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "unrollsync/rng.hpp"

// Define-by-run reverse-mode differentiation over dense row-major tensors.
// Every op allocates a result node; when any input requires a gradient the
// node records its parents and a backward rule.

namespace unrollsync::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // empty until first accumulation
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;
    bool requires_grad = false;
    bool is_leaf = true;
    const char* op = "leaf";

    std::span<double> grad_buffer();
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    static Tensor constant(Shape shape, std::vector<double> values);
    static Tensor zeros(Shape shape);
    static Tensor scalar(double v);
    /// Leaf that receives gradients.
    static Tensor parameter(Shape shape, std::vector<double> values);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    bool requires_grad() const { return node_->requires_grad; }

    std::span<const double> value() const { return node_->value; }
    std::span<double> mutable_value() { return node_->value; }
    /// Gradient (zeros if none accumulated yet).
    std::vector<double> grad() const;
    void zero_grad() { node_->grad.clear(); }
    double item() const;

    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Disables graph recording in its scope (inference).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

/// Reverse pass from a scalar. Leaf gradients accumulate across calls;
/// intermediate gradients are reset at the start of each call.
void backward(const Tensor& loss);

// --- primitives -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);  // [m,k] x [k,n]
/// Batched product of [B,m,k] and [B,k,n]; transposes act on the last two axes.
Tensor bmm(const Tensor& a, const Tensor& b, bool transpose_a = false, bool transpose_b = false);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);
/// x * s for a one-element tensor s.
Tensor mul_scalar(const Tensor& x, const Tensor& s);
/// y[i,j] = x[i,j] * v[i] for x [r,c], v [r,1].
Tensor mul_rows(const Tensor& x, const Tensor& v);
/// y[i,j] = x[i,j] / v[i].
Tensor div_rows(const Tensor& x, const Tensor& v);
/// x / max(y, eps); the clamped branch passes no gradient to y.
Tensor div_clamped(const Tensor& x, const Tensor& y, double eps);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor square(const Tensor& x);
/// Gradient taken as 0 where the value is 0.
Tensor sqrt(const Tensor& x);
/// Subgradient 0 at 0.
Tensor abs(const Tensor& x);
Tensor cos(const Tensor& x);
Tensor sin(const Tensor& x);
/// Elementwise atan2(y, x).
Tensor atan2(const Tensor& y, const Tensor& x);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);
/// Sum of a rank-2 tensor over `axis` (kept as a size-1 dimension).
Tensor sum_axis(const Tensor& x, std::size_t axis);
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);  // rank 2
Tensor concat(const std::vector<Tensor>& xs, std::size_t axis);  // rank 2

enum class Mode { Train, Eval };

struct BatchNormStats {
    std::vector<double> running_mean;
    std::vector<double> running_var;
    double momentum = 0.9;
    double eps = 1e-5;

    explicit BatchNormStats(std::size_t features = 0)
        : running_mean(features, 0.0), running_var(features, 1.0) {}
};

/// Per-feature normalization over rows of x [r,f]. Train mode uses batch
/// statistics (biased variance) and updates the running estimates; eval mode
/// uses the running estimates.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode);

/// x [r,in] W [in,out] + b [1,out].
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);

// --- parameters and optimizer ---------------------------------------------

struct AdamConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 128;
};

class ParameterStore {
public:
    Tensor& add(const std::string& name, Shape shape, std::vector<double> init);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    const std::vector<std::string>& names() const { return names_; }
    std::size_t parameter_count() const;
    void zero_grad();

    std::uint64_t step() const { return step_; }

    // Adam state, exposed for serialization.
    std::vector<double>& first_moment(const std::string& name) { return moments_.at(index_.at(name)).first; }
    std::vector<double>& second_moment(const std::string& name) { return moments_.at(index_.at(name)).second; }
    void set_step(std::uint64_t s) { step_ = s; }

    friend void adam_step(ParameterStore& store, const AdamConfig& cfg);

private:
    std::vector<std::string> names_;
    std::map<std::string, std::size_t> index_;
    std::vector<Tensor> params_;
    std::vector<std::pair<std::vector<double>, std::vector<double>>> moments_;
    std::uint64_t step_ = 0;
};

/// One bias-corrected Adam update of every parameter from its gradient.
/// Throws SolverError(Divergence) naming the parameter on a non-finite gradient.
void adam_step(ParameterStore& store, const AdamConfig& cfg);

/// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)).
std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace unrollsync::ad
