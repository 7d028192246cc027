#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace zsl {

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tensor;

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::uint64_t id = 0;  // creation order; backward visits ids descending
    std::vector<Tensor> parents;
    // Given the gradient of the root w.r.t. this node, produce gradients
    // w.r.t. each parent. Built from tensor ops so it can itself be taped.
    std::function<std::vector<Tensor>(const Tensor&)> backward_fn;
    std::shared_ptr<Node> grad;
};

}  // namespace detail

// Turns grad recording off for the enclosing scope.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

bool grad_enabled();

// Dense row-major tensor handle. Copies share the underlying node.
class Tensor {
public:
    Tensor() = default;

    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->data.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
    const std::vector<double>& data() const { return node_->data; }
    std::vector<double>& mutable_data() { return node_->data; }
    double item() const;
    double at(std::size_t i) const { return node_->data.at(i); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }
    bool is_leaf() const { return !node_->backward_fn; }

    Tensor grad() const;
    bool has_grad() const { return node_ && node_->grad != nullptr; }
    void zero_grad() { node_->grad = nullptr; }

    // New leaf sharing nothing with the graph.
    Tensor detach() const;

    detail::Node* node() const { return node_.get(); }
    const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

    friend Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                          std::function<std::vector<Tensor>(const Tensor&)> backward_fn);

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;
};

// ---- primitive ops (all record onto the tape when grads are enabled) ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor add_scalar(const Tensor& a, double c);
Tensor mul_scalar(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// y[i][j] = a[i][j] + v[j]
Tensor add_rowvec(const Tensor& a, const Tensor& v);
Tensor col_sum(const Tensor& a);
Tensor broadcast_rows(const Tensor& v, std::size_t rows);

Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor expand_scalar(const Tensor& s, Shape shape);

Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len);

Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);
Tensor tanh_op(const Tensor& a);
Tensor sqrt_elem(const Tensor& a);

// per-row dot product of two [b x n] tensors -> [b]
Tensor rowdot(const Tensor& a, const Tensor& b);
// scales row i of a [b x n] tensor by v[i]
Tensor scale_rows(const Tensor& a, const Tensor& v);

// per-row Euclidean norm of a [b x d] tensor -> [b], differentiable
Tensor grad_norm(const Tensor& g);

// mean over the batch of -log softmax(logits)[label]
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

// Backpropagates from a scalar root. Leaf gradients land in Tensor::grad().
// Existing leaf grads are overwritten, not accumulated. With create_graph
// the gradient computation is itself recorded, enabling double backprop.
void backward(const Tensor& root, bool create_graph = false);

// Scans for NaN/Inf after every primitive when enabled (default on).
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

}  // namespace zsl
