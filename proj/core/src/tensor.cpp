#include "zslfeat/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_map>

namespace zsl {

namespace {

thread_local bool g_grad_enabled = true;
thread_local bool g_finite_checks = true;
std::atomic<std::uint64_t> g_next_id{1};

void check_finite(const std::vector<double>& data, const char* op) {
    if (!g_finite_checks) return;
    for (double v : data) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string("non-finite value produced by ") + op);
        }
    }
}

void require_matrix(const Tensor& t, const char* op) {
    if (t.shape().size() != 2) {
        throw ShapeError(std::string(op) + ": expected 2-d tensor, got shape " + shape_str(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

}  // namespace

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

bool grad_enabled() { return g_grad_enabled; }

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("from_data: shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
    }
    check_finite(data, "from_data");
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->requires_grad = requires_grad;
    n->id = g_next_id.fetch_add(1);
    return Tensor(std::move(n));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    std::vector<double> d(shape_numel(shape), 0.0);
    return from_data(std::move(shape), std::move(d), requires_grad);
}

Tensor Tensor::full(Shape shape, double value) {
    std::vector<double> d(shape_numel(shape), value);
    return from_data(std::move(shape), std::move(d));
}

Tensor Tensor::scalar(double value) { return from_data({1}, {value}); }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
    return node_->data[0];
}

Tensor Tensor::grad() const {
    if (!node_->grad) throw std::logic_error("grad: no gradient has been computed for this tensor");
    return Tensor(node_->grad);
}

Tensor Tensor::detach() const {
    return from_data(node_->shape, node_->data, false);
}

Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
               std::function<std::vector<Tensor>(const Tensor&)> backward_fn) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->data = std::move(data);
    n->id = g_next_id.fetch_add(1);
    bool track = false;
    if (g_grad_enabled) {
        for (const auto& p : parents) track = track || p.requires_grad();
    }
    if (track) {
        n->requires_grad = true;
        n->parents = std::move(parents);
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor(std::move(n));
}

// ---- elementwise ----

namespace {

template <class F>
std::vector<double> zip(const Tensor& a, const Tensor& b, F f) {
    std::vector<double> out(a.numel());
    const auto& x = a.data();
    const auto& y = b.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
    return out;
}

template <class F>
std::vector<double> map1(const Tensor& a, F f) {
    std::vector<double> out(a.numel());
    const auto& x = a.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    auto d = zip(a, b, [](double x, double y) { return x + y; });
    check_finite(d, "add");
    return make_op(a.shape(), std::move(d), {a, b},
                   [](const Tensor& g) { return std::vector<Tensor>{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    auto d = zip(a, b, [](double x, double y) { return x - y; });
    check_finite(d, "sub");
    return make_op(a.shape(), std::move(d), {a, b},
                   [](const Tensor& g) { return std::vector<Tensor>{g, neg(g)}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    auto d = zip(a, b, [](double x, double y) { return x * y; });
    check_finite(d, "mul");
    return make_op(a.shape(), std::move(d), {a, b}, [a, b](const Tensor& g) {
        return std::vector<Tensor>{mul(g, b), mul(g, a)};
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    auto d = zip(a, b, [](double x, double y) { return x / y; });
    check_finite(d, "div");
    return make_op(a.shape(), std::move(d), {a, b}, [a, b](const Tensor& g) {
        Tensor ga = div(g, b);
        Tensor gb = neg(div(mul(g, a), mul(b, b)));
        return std::vector<Tensor>{ga, gb};
    });
}

Tensor neg(const Tensor& a) { return mul_scalar(a, -1.0); }

Tensor add_scalar(const Tensor& a, double c) {
    auto d = map1(a, [c](double x) { return x + c; });
    check_finite(d, "add_scalar");
    return make_op(a.shape(), std::move(d), {a},
                   [](const Tensor& g) { return std::vector<Tensor>{g}; });
}

Tensor mul_scalar(const Tensor& a, double c) {
    auto d = map1(a, [c](double x) { return x * c; });
    check_finite(d, "mul_scalar");
    return make_op(a.shape(), std::move(d), {a},
                   [c](const Tensor& g) { return std::vector<Tensor>{mul_scalar(g, c)}; });
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_matrix(a, "matmul");
    require_matrix(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    std::vector<double> out(m * n, 0.0);
    const auto& x = a.data();
    const auto& y = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double xv = x[i * k + p];
            if (xv == 0.0) continue;
            const double* yr = &y[p * n];
            double* orow = &out[i * n];
            for (std::size_t j = 0; j < n; ++j) orow[j] += xv * yr[j];
        }
    }
    check_finite(out, "matmul");
    return make_op({m, n}, std::move(out), {a, b}, [a, b](const Tensor& g) {
        Tensor ga = matmul(g, transpose(b));
        Tensor gb = matmul(transpose(a), g);
        return std::vector<Tensor>{ga, gb};
    });
}

Tensor transpose(const Tensor& a) {
    require_matrix(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    const auto& x = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
    return make_op({n, m}, std::move(out), {a},
                   [](const Tensor& g) { return std::vector<Tensor>{transpose(g)}; });
}

Tensor add_rowvec(const Tensor& a, const Tensor& v) {
    require_matrix(a, "add_rowvec");
    if (v.shape().size() != 1 || v.dim(0) != a.dim(1)) {
        throw ShapeError("add_rowvec: vector " + shape_str(v.shape()) + " vs matrix " +
                         shape_str(a.shape()));
    }
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    const auto& x = a.data();
    const auto& b = v.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + b[j];
    check_finite(out, "add_rowvec");
    return make_op({m, n}, std::move(out), {a, v},
                   [](const Tensor& g) { return std::vector<Tensor>{g, col_sum(g)}; });
}

Tensor col_sum(const Tensor& a) {
    require_matrix(a, "col_sum");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(n, 0.0);
    const auto& x = a.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
    check_finite(out, "col_sum");
    return make_op({n}, std::move(out), {a},
                   [m](const Tensor& g) { return std::vector<Tensor>{broadcast_rows(g, m)}; });
}

Tensor broadcast_rows(const Tensor& v, std::size_t rows) {
    if (v.shape().size() != 1) throw ShapeError("broadcast_rows: expected 1-d tensor");
    const std::size_t n = v.dim(0);
    std::vector<double> out(rows * n);
    const auto& x = v.data();
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[j];
    return make_op({rows, n}, std::move(out), {v},
                   [](const Tensor& g) { return std::vector<Tensor>{col_sum(g)}; });
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    std::vector<double> out{s};
    check_finite(out, "sum_all");
    Shape sh = a.shape();
    return make_op({1}, std::move(out), {a}, [sh](const Tensor& g) {
        return std::vector<Tensor>{expand_scalar(g, sh)};
    });
}

Tensor mean_all(const Tensor& a) {
    return mul_scalar(sum_all(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor expand_scalar(const Tensor& s, Shape shape) {
    if (s.numel() != 1) throw ShapeError("expand_scalar: source is not scalar");
    std::vector<double> out(shape_numel(shape), s.item());
    return make_op(std::move(shape), std::move(out), {s},
                   [](const Tensor& g) { return std::vector<Tensor>{sum_all(g)}; });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    require_matrix(a, "concat_cols");
    require_matrix(b, "concat_cols");
    if (a.dim(0) != b.dim(0)) {
        throw ShapeError("concat_cols: row counts differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
    const std::size_t m = a.dim(0), p = a.dim(1), q = b.dim(1);
    std::vector<double> out(m * (p + q));
    const auto& x = a.data();
    const auto& y = b.data();
    for (std::size_t i = 0; i < m; ++i) {
        std::copy(&x[i * p], &x[i * p] + p, &out[i * (p + q)]);
        std::copy(&y[i * q], &y[i * q] + q, &out[i * (p + q) + p]);
    }
    return make_op({m, p + q}, std::move(out), {a, b}, [p, q](const Tensor& g) {
        return std::vector<Tensor>{slice_cols(g, 0, p), slice_cols(g, p, q)};
    });
}

namespace {

// zero-pads a [m x len] block back into a [m x total] matrix at column `start`
Tensor pad_cols(const Tensor& a, std::size_t total, std::size_t start) {
    const std::size_t m = a.dim(0), len = a.dim(1);
    std::vector<double> out(m * total, 0.0);
    const auto& x = a.data();
    for (std::size_t i = 0; i < m; ++i)
        std::copy(&x[i * len], &x[i * len] + len, &out[i * total + start]);
    return make_op({m, total}, std::move(out), {a}, [start, len](const Tensor& g) {
        return std::vector<Tensor>{slice_cols(g, start, len)};
    });
}

}  // namespace

Tensor slice_cols(const Tensor& a, std::size_t start, std::size_t len) {
    require_matrix(a, "slice_cols");
    const std::size_t m = a.dim(0), n = a.dim(1);
    if (start + len > n) throw ShapeError("slice_cols: range out of bounds");
    std::vector<double> out(m * len);
    const auto& x = a.data();
    for (std::size_t i = 0; i < m; ++i)
        std::copy(&x[i * n + start], &x[i * n + start] + len, &out[i * len]);
    return make_op({m, len}, std::move(out), {a}, [n, start](const Tensor& g) {
        return std::vector<Tensor>{pad_cols(g, n, start)};
    });
}

// ---- activations ----

Tensor relu(const Tensor& a) {
    auto d = map1(a, [](double x) { return x > 0.0 ? x : 0.0; });
    std::vector<double> mask = map1(a, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
    Tensor mask_t = Tensor::from_data(a.shape(), std::move(mask));
    return make_op(a.shape(), std::move(d), {a}, [mask_t](const Tensor& g) {
        return std::vector<Tensor>{mul(g, mask_t)};
    });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    if (!(slope > 0.0 && slope < 1.0)) {
        throw std::invalid_argument("leaky_relu: slope must lie in (0,1)");
    }
    auto d = map1(a, [slope](double x) { return x > 0.0 ? x : slope * x; });
    std::vector<double> mask = map1(a, [slope](double x) { return x > 0.0 ? 1.0 : slope; });
    Tensor mask_t = Tensor::from_data(a.shape(), std::move(mask));
    return make_op(a.shape(), std::move(d), {a}, [mask_t](const Tensor& g) {
        return std::vector<Tensor>{mul(g, mask_t)};
    });
}

Tensor tanh_op(const Tensor& a) {
    auto d = map1(a, [](double x) { return std::tanh(x); });
    Tensor out = make_op(a.shape(), std::move(d), {a}, nullptr);
    // backward uses the output value; rebuild the closure now that `out` exists
    if (out.requires_grad()) {
        Tensor y = Tensor::from_data(out.shape(), out.data());
        out.node()->backward_fn = [y](const Tensor& g) {
            Tensor one_minus = add_scalar(neg(mul(y, y)), 1.0);
            return std::vector<Tensor>{mul(g, one_minus)};
        };
    }
    return out;
}

Tensor sqrt_elem(const Tensor& a) {
    auto d = map1(a, [](double x) { return std::sqrt(x); });
    check_finite(d, "sqrt_elem");
    Tensor out = make_op(a.shape(), std::move(d), {a}, nullptr);
    if (out.requires_grad()) {
        Tensor y = Tensor::from_data(out.shape(), out.data());
        out.node()->backward_fn = [y](const Tensor& g) {
            return std::vector<Tensor>{div(g, mul_scalar(y, 2.0))};
        };
    }
    return out;
}

// ---- row reductions ----

Tensor rowdot(const Tensor& a, const Tensor& b) {
    require_matrix(a, "rowdot");
    require_same_shape(a, b, "rowdot");
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m, 0.0);
    const auto& x = a.data();
    const auto& y = b.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += x[i * n + j] * y[i * n + j];
    check_finite(out, "rowdot");
    return make_op({m}, std::move(out), {a, b}, [a, b](const Tensor& g) {
        return std::vector<Tensor>{scale_rows(b, g), scale_rows(a, g)};
    });
}

Tensor scale_rows(const Tensor& a, const Tensor& v) {
    require_matrix(a, "scale_rows");
    if (v.shape().size() != 1 || v.dim(0) != a.dim(0)) {
        throw ShapeError("scale_rows: scale vector " + shape_str(v.shape()) + " vs matrix " +
                         shape_str(a.shape()));
    }
    const std::size_t m = a.dim(0), n = a.dim(1);
    std::vector<double> out(m * n);
    const auto& x = a.data();
    const auto& s = v.data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] * s[i];
    check_finite(out, "scale_rows");
    return make_op({m, n}, std::move(out), {a, v}, [a, v](const Tensor& g) {
        return std::vector<Tensor>{scale_rows(g, v), rowdot(g, a)};
    });
}

Tensor grad_norm(const Tensor& g) {
    // tiny floor keeps the sqrt backward finite when a row's gradient
    // vanishes (e.g. a fully inactive relu trunk)
    return sqrt_elem(add_scalar(rowdot(g, g), 1e-12));
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
    require_matrix(logits, "softmax_cross_entropy");
    const std::size_t b = logits.dim(0), c = logits.dim(1);
    if (labels.size() != b) {
        throw std::invalid_argument("softmax_cross_entropy: batch size " + std::to_string(b) +
                                    " vs " + std::to_string(labels.size()) + " labels");
    }
    for (auto l : labels) {
        if (l >= c) throw std::invalid_argument("softmax_cross_entropy: label out of range");
    }
    const auto& x = logits.data();
    std::vector<double> probs(b * c);
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        double mx = x[i * c];
        for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x[i * c + j]);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp(x[i * c + j] - mx);
        const double logz = std::log(z) + mx;
        for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(x[i * c + j] - logz);
        loss -= x[i * c + labels[i]] - logz;
    }
    loss /= static_cast<double>(b);
    std::vector<double> out{loss};
    check_finite(out, "softmax_cross_entropy");
    // grad wrt logits: (softmax - onehot)/b, treated as constant in g
    for (std::size_t i = 0; i < b; ++i) probs[i * c + labels[i]] -= 1.0;
    for (auto& p : probs) p /= static_cast<double>(b);
    Tensor jac = Tensor::from_data({b, c}, std::move(probs));
    return make_op({1}, std::move(out), {logits}, [jac](const Tensor& g) {
        return std::vector<Tensor>{mul(expand_scalar(g, jac.shape()), jac)};
    });
}

// ---- backward ----

void backward(const Tensor& root, bool create_graph) {
    if (root.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
    if (!root.requires_grad()) {
        throw std::invalid_argument("backward: root does not require grad");
    }

    // collect the reachable grad-requiring subgraph
    std::vector<detail::Node*> order;
    std::unordered_map<detail::Node*, Tensor> keepalive;
    {
        std::vector<Tensor> stack{root};
        std::unordered_map<detail::Node*, bool> seen;
        while (!stack.empty()) {
            Tensor t = stack.back();
            stack.pop_back();
            detail::Node* n = t.node();
            if (seen[n]) continue;
            seen[n] = true;
            keepalive.emplace(n, t);
            order.push_back(n);
            for (const auto& p : n->parents) {
                if (p.requires_grad()) stack.push_back(p);
            }
        }
    }
    std::sort(order.begin(), order.end(),
              [](detail::Node* a, detail::Node* b) { return a->id > b->id; });

    std::unordered_map<detail::Node*, Tensor> grads;
    grads.emplace(root.node(), Tensor::from_data(root.shape(), {1.0}));

    auto propagate = [&]() {
        for (detail::Node* n : order) {
            auto it = grads.find(n);
            if (it == grads.end()) continue;
            if (!n->backward_fn) continue;
            std::vector<Tensor> pg = n->backward_fn(it->second);
            for (std::size_t i = 0; i < n->parents.size(); ++i) {
                if (!n->parents[i].requires_grad()) continue;
                detail::Node* p = n->parents[i].node();
                auto g = grads.find(p);
                if (g == grads.end()) {
                    grads.emplace(p, pg[i]);
                } else {
                    g->second = add(g->second, pg[i]);
                }
            }
        }
    };

    if (create_graph) {
        propagate();
    } else {
        NoGradGuard ng;
        propagate();
    }

    // assign leaf grads (overwrite, not accumulate)
    for (detail::Node* n : order) {
        if (n->backward_fn) continue;
        auto it = grads.find(n);
        if (it == grads.end()) continue;
        n->grad = it->second.node_ptr();
    }
}

}  // namespace zsl
