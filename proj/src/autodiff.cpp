#include "unrollsync/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "unrollsync/errors.hpp"

namespace unrollsync::ad {

namespace {

thread_local bool g_grad_enabled = true;

void require(bool cond, const char* op, const std::string& msg) {
    if (!cond) throw std::invalid_argument(std::string(op) + ": " + msg);
}

std::shared_ptr<Node> make_node(Shape shape, std::vector<double> value, const char* op,
                                std::vector<std::shared_ptr<Node>> parents) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->op = op;
    n->is_leaf = false;
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    if (g_grad_enabled && any) {
        n->requires_grad = true;
        n->parents = std::move(parents);
    }
    return n;
}

// C (m x n) (+)= op(X) (m x k) * op(Y) (k x n), X stored k x m when tx, Y stored n x k when ty.
void gemm(bool tx, bool ty, std::size_t m, std::size_t n, std::size_t k, const double* x, const double* y, double* c,
          bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    if (!tx && (ty || n == 1)) {
        // rows of x against rows of y^T (or the single column of y)
        for (std::size_t i = 0; i < m; ++i) {
            const double* xrow = x + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                const double* ycol = ty ? y + j * k : y;
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += xrow[p] * ycol[p];
                c[i * n + j] += acc;
            }
        }
    } else if (!tx) {
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = c + i * n;
            const double* xrow = x + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const double a = xrow[p];
                const double* yrow = y + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += a * yrow[j];
            }
        }
    } else if (!ty) {
        for (std::size_t p = 0; p < k; ++p) {
            const double* xrow = x + p * m;
            const double* yrow = y + p * n;
            for (std::size_t i = 0; i < m; ++i) {
                const double a = xrow[i];
                double* crow = c + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += a * yrow[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += x[p * m + i] * y[j * k + p];
                c[i * n + j] += acc;
            }
    }
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

template <class F, class G>
Tensor unary(const Tensor& x, const char* op, F forward, G derivative) {
    const auto& xv = x.node().value;
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = forward(xv[i]);
    auto node = make_node(x.shape(), std::move(out), op, {x.ptr()});
    if (node->requires_grad) {
        node->backward = [derivative](Node& self) {
            auto& px = *self.parents[0];
            if (!px.requires_grad) return;
            auto g = px.grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * derivative(px.value[i], self.value[i]);
        };
    }
    return Tensor(node);
}

}  // namespace

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

std::span<double> Node::grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
}

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
    require(numel(shape) == values.size(), "constant", "size does not match shape " + shape_str(shape));
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value = std::move(values);
    return Tensor(n);
}

Tensor Tensor::zeros(Shape shape) {
    const auto n = numel(shape);
    return constant(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::scalar(double v) { return constant({1}, {v}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
    Tensor t = constant(std::move(shape), std::move(values));
    t.node().requires_grad = true;
    t.node().op = "parameter";
    return t;
}

std::vector<double> Tensor::grad() const {
    if (node_->grad.size() == node_->value.size()) return node_->grad;
    return std::vector<double>(node_->value.size(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw std::invalid_argument("item: tensor has " + std::to_string(size()) + " elements");
    return node_->value[0];
}

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

bool grad_enabled() { return g_grad_enabled; }

void backward(const Tensor& loss) {
    require(loss.defined() && loss.size() == 1, "backward", "loss must be a scalar");
    if (!loss.requires_grad()) return;

    // Iterative post-order DFS.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(&loss.node(), 0);
    seen.insert(&loss.node());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (Node* n : order)
        if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
    loss.node().grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward) n->backward(*n);
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.rank() == 2 && b.rank() == 2 && a.dim(1) == b.dim(0), "matmul",
            "incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n);
    gemm(false, false, m, n, k, a.value().data(), b.value().data(), out.data(), false);
    auto node = make_node({m, n}, std::move(out), "matmul", {a.ptr(), b.ptr()});
    if (node->requires_grad) {
        node->backward = [m, n, k](Node& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad)
                gemm(false, true, m, k, n, self.grad.data(), pb.value.data(), pa.grad_buffer().data(), true);
            if (pb.requires_grad)
                gemm(true, false, k, n, m, pa.value.data(), self.grad.data(), pb.grad_buffer().data(), true);
        };
    }
    return Tensor(node);
}

Tensor bmm(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    require(a.rank() == 3 && b.rank() == 3 && a.dim(0) == b.dim(0), "bmm",
            "expected matching batched operands, got " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
    const std::size_t batch = a.dim(0);
    const std::size_t m = ta ? a.dim(2) : a.dim(1);
    const std::size_t k = ta ? a.dim(1) : a.dim(2);
    const std::size_t kb = tb ? b.dim(2) : b.dim(1);
    const std::size_t n = tb ? b.dim(1) : b.dim(2);
    require(k == kb, "bmm", "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    std::vector<double> out(batch * m * n);
    const std::size_t sa = m * k, sb = k * n, sc = m * n;
    for (std::size_t i = 0; i < batch; ++i)
        gemm(ta, tb, m, n, k, a.value().data() + i * sa, b.value().data() + i * sb, out.data() + i * sc, false);
    auto node = make_node({batch, m, n}, std::move(out), "bmm", {a.ptr(), b.ptr()});
    if (node->requires_grad) {
        node->backward = [=](Node& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            for (std::size_t i = 0; i < batch; ++i) {
                const double* dc = self.grad.data() + i * sc;
                const double* av = pa.value.data() + i * sa;
                const double* bv = pb.value.data() + i * sb;
                if (pa.requires_grad) {
                    double* da = pa.grad_buffer().data() + i * sa;
                    if (!ta)
                        gemm(false, !tb, m, k, n, dc, bv, da, true);
                    else
                        gemm(tb, true, k, m, n, bv, dc, da, true);
                }
                if (pb.requires_grad) {
                    double* db = pb.grad_buffer().data() + i * sb;
                    if (!tb)
                        gemm(!ta, false, k, n, m, av, dc, db, true);
                    else
                        gemm(true, ta, n, k, m, dc, av, db, true);
                }
            }
        };
    }
    return Tensor(node);
}

namespace {

template <class F, class GA, class GB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, GA da, GB db) {
    require(same_shape(a, b), op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const auto& av = a.node().value;
    const auto& bv = b.node().value;
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i]);
    auto node = make_node(a.shape(), std::move(out), op, {a.ptr(), b.ptr()});
    if (node->requires_grad) {
        node->backward = [da, db](Node& self) {
            auto& pa = *self.parents[0];
            auto& pb = *self.parents[1];
            if (pa.requires_grad) {
                auto g = pa.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * da(pa.value[i], pb.value[i]);
            }
            if (pb.requires_grad) {
                auto g = pb.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * db(pa.value[i], pb.value[i]);
            }
        };
    }
    return Tensor(node);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Tensor atan2(const Tensor& y, const Tensor& x) {
    return binary(
        y, x, "atan2", [](double a, double b) { return std::atan2(a, b); },
        [](double a, double b) {
            const double r = a * a + b * b;
            return r > 0.0 ? b / r : 0.0;
        },
        [](double a, double b) {
            const double r = a * a + b * b;
            return r > 0.0 ? -a / r : 0.0;
        });
}

Tensor scale(const Tensor& x, double c) {
    return unary(
        x, "scale", [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& x, double c) {
    return unary(
        x, "add_scalar", [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
    require(s.size() == 1, "mul_scalar", "scalar operand has shape " + shape_str(s.shape()));
    const double sv = s.value()[0];
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = sv * x.value()[i];
    auto node = make_node(x.shape(), std::move(out), "mul_scalar", {x.ptr(), s.ptr()});
    if (node->requires_grad) {
        node->backward = [](Node& self) {
            auto& px = *self.parents[0];
            auto& ps = *self.parents[1];
            const double sv = ps.value[0];
            if (px.requires_grad) {
                auto g = px.grad_buffer();
                for (std::size_t i = 0; i < g.size(); ++i) g[i] += sv * self.grad[i];
            }
            if (ps.requires_grad) {
                double acc = 0.0;
                for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * px.value[i];
                ps.grad_buffer()[0] += acc;
            }
        };
    }
    return Tensor(node);
}

namespace {

void check_rows(const Tensor& x, const Tensor& v, const char* op) {
    require(x.rank() == 2 && v.rank() == 2 && v.dim(1) == 1 && v.dim(0) == x.dim(0), op,
            "expected x [r,c] and v [r,1], got " + shape_str(x.shape()) + " and " + shape_str(v.shape()));
}

}  // namespace

Tensor mul_rows(const Tensor& x, const Tensor& v) {
    check_rows(x, v, "mul_rows");
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.value()[i * c + j] * v.value()[i];
    auto node = make_node(x.shape(), std::move(out), "mul_rows", {x.ptr(), v.ptr()});
    if (node->requires_grad) {
        node->backward = [r, c](Node& self) {
            auto& px = *self.parents[0];
            auto& pv = *self.parents[1];
            if (px.requires_grad) {
                auto g = px.grad_buffer();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j] * pv.value[i];
            }
            if (pv.requires_grad) {
                auto g = pv.grad_buffer();
                for (std::size_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) acc += self.grad[i * c + j] * px.value[i * c + j];
                    g[i] += acc;
                }
            }
        };
    }
    return Tensor(node);
}

Tensor div_rows(const Tensor& x, const Tensor& v) {
    check_rows(x, v, "div_rows");
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        if (v.value()[i] == 0.0) throw SolverError(SolverError::Kind::DegenerateIterate, "div_rows: zero divisor");
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.value()[i * c + j] / v.value()[i];
    }
    auto node = make_node(x.shape(), std::move(out), "div_rows", {x.ptr(), v.ptr()});
    if (node->requires_grad) {
        node->backward = [r, c](Node& self) {
            auto& px = *self.parents[0];
            auto& pv = *self.parents[1];
            if (px.requires_grad) {
                auto g = px.grad_buffer();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j] / pv.value[i];
            }
            if (pv.requires_grad) {
                auto g = pv.grad_buffer();
                for (std::size_t i = 0; i < r; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) acc += self.grad[i * c + j] * self.value[i * c + j];
                    g[i] -= acc / pv.value[i];
                }
            }
        };
    }
    return Tensor(node);
}

Tensor div_clamped(const Tensor& x, const Tensor& y, double eps) {
    return binary(
        x, y, "div_clamped", [eps](double a, double b) { return a / std::max(b, eps); },
        [eps](double, double b) { return 1.0 / std::max(b, eps); },
        [eps](double a, double b) { return b > eps ? -a / (b * b) : 0.0; });
}

Tensor tanh(const Tensor& x) {
    return unary(
        x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& x) {
    return unary(
        x, "relu", [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor square(const Tensor& x) {
    return unary(
        x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor sqrt(const Tensor& x) {
    return unary(
        x, "sqrt",
        [](double v) {
            if (v < 0.0) throw std::domain_error("sqrt: negative argument");
            return std::sqrt(v);
        },
        [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor abs(const Tensor& x) {
    return unary(
        x, "abs", [](double v) { return std::abs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor cos(const Tensor& x) {
    return unary(
        x, "cos", [](double v) { return std::cos(v); }, [](double v, double) { return -std::sin(v); });
}

Tensor sin(const Tensor& x) {
    return unary(
        x, "sin", [](double v) { return std::sin(v); }, [](double v, double) { return std::cos(v); });
}

Tensor sum_all(const Tensor& x) {
    double s = 0.0;
    for (double v : x.value()) s += v;
    auto node = make_node({1}, {s}, "sum_all", {x.ptr()});
    if (node->requires_grad) {
        node->backward = [](Node& self) {
            auto g = self.parents[0]->grad_buffer();
            for (auto& v : g) v += self.grad[0];
        };
    }
    return Tensor(node);
}

Tensor mean_all(const Tensor& x) {
    require(x.size() > 0, "mean_all", "empty tensor");
    return scale(sum_all(x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum_axis(const Tensor& x, std::size_t axis) {
    require(x.rank() == 2 && axis < 2, "sum_axis", "expected rank 2 and axis 0 or 1, got " + shape_str(x.shape()));
    const std::size_t r = x.dim(0), c = x.dim(1);
    Shape shape = axis == 0 ? Shape{1, c} : Shape{r, 1};
    std::vector<double> out(axis == 0 ? c : r, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += x.value()[i * c + j];
    auto node = make_node(std::move(shape), std::move(out), "sum_axis", {x.ptr()});
    if (node->requires_grad) {
        node->backward = [r, c, axis](Node& self) {
            auto g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[axis == 0 ? j : i];
        };
    }
    return Tensor(node);
}

Tensor reshape(const Tensor& x, Shape shape) {
    require(numel(shape) == x.size(), "reshape",
            "cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
    std::vector<double> out(x.value().begin(), x.value().end());
    auto node = make_node(std::move(shape), std::move(out), "reshape", {x.ptr()});
    if (node->requires_grad) {
        node->backward = [](Node& self) {
            auto g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
        };
    }
    return Tensor(node);
}

Tensor transpose(const Tensor& x) {
    require(x.rank() == 2, "transpose", "expected rank 2, got " + shape_str(x.shape()));
    const std::size_t r = x.dim(0), c = x.dim(1);
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.value()[i * c + j];
    auto node = make_node({c, r}, std::move(out), "transpose", {x.ptr()});
    if (node->requires_grad) {
        node->backward = [r, c](Node& self) {
            auto g = self.parents[0]->grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[j * r + i];
        };
    }
    return Tensor(node);
}

Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
    require(!xs.empty() && axis < 2, "concat", "need at least one tensor and axis 0 or 1");
    for (const auto& t : xs) require(t.rank() == 2, "concat", "expected rank 2, got " + shape_str(t.shape()));
    std::size_t rows = xs[0].dim(0), cols = xs[0].dim(1);
    for (std::size_t t = 1; t < xs.size(); ++t) {
        if (axis == 0) {
            require(xs[t].dim(1) == cols, "concat", "column counts differ");
            rows += xs[t].dim(0);
        } else {
            require(xs[t].dim(0) == rows, "concat", "row counts differ");
            cols += xs[t].dim(1);
        }
    }
    std::vector<double> out(rows * cols);
    std::vector<std::shared_ptr<Node>> parents;
    std::size_t offset = 0;
    for (const auto& t : xs) {
        const std::size_t r = t.dim(0), c = t.dim(1);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                const std::size_t oi = axis == 0 ? offset + i : i;
                const std::size_t oj = axis == 0 ? j : offset + j;
                out[oi * cols + oj] = t.value()[i * c + j];
            }
        offset += axis == 0 ? r : c;
        parents.push_back(t.ptr());
    }
    auto node = make_node({rows, cols}, std::move(out), "concat", std::move(parents));
    if (node->requires_grad) {
        node->backward = [axis, cols](Node& self) {
            std::size_t offset = 0;
            for (auto& p : self.parents) {
                const std::size_t r = p->shape[0], c = p->shape[1];
                if (p->requires_grad) {
                    auto g = p->grad_buffer();
                    for (std::size_t i = 0; i < r; ++i)
                        for (std::size_t j = 0; j < c; ++j) {
                            const std::size_t oi = axis == 0 ? offset + i : i;
                            const std::size_t oj = axis == 0 ? j : offset + j;
                            g[i * c + j] += self.grad[oi * cols + oj];
                        }
                }
                offset += axis == 0 ? r : c;
            }
        };
    }
    return Tensor(node);
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormStats& stats, Mode mode) {
    require(x.rank() == 2, "batchnorm", "expected rank 2, got " + shape_str(x.shape()));
    const std::size_t r = x.dim(0), f = x.dim(1);
    require(gamma.size() == f && beta.size() == f, "batchnorm", "gamma/beta must have one entry per feature");
    require(stats.running_mean.size() == f && stats.running_var.size() == f, "batchnorm",
            "running statistics have the wrong width");
    require(r > 0, "batchnorm", "empty batch");

    const double* xv = x.node().value.data();
    std::vector<double> mean(f, 0.0), var(f, 0.0);
    if (mode == Mode::Train) {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < f; ++j) mean[j] += xv[i * f + j];
        for (auto& m : mean) m /= static_cast<double>(r);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < f; ++j) {
                const double d = xv[i * f + j] - mean[j];
                var[j] += d * d;
            }
        for (auto& v : var) v /= static_cast<double>(r);
        for (std::size_t j = 0; j < f; ++j) {
            stats.running_mean[j] = stats.momentum * stats.running_mean[j] + (1.0 - stats.momentum) * mean[j];
            stats.running_var[j] = stats.momentum * stats.running_var[j] + (1.0 - stats.momentum) * var[j];
        }
    } else {
        mean = stats.running_mean;
        var = stats.running_var;
    }
    std::vector<double> invstd(f);
    for (std::size_t j = 0; j < f; ++j) invstd[j] = 1.0 / std::sqrt(var[j] + stats.eps);

    const double* gv = gamma.node().value.data();
    const double* bv = beta.node().value.data();
    std::vector<double> xhat(r * f), out(r * f);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < f; ++j) {
            const double h = (xv[i * f + j] - mean[j]) * invstd[j];
            xhat[i * f + j] = h;
            out[i * f + j] = gv[j] * h + bv[j];
        }
    auto node = make_node(x.shape(), std::move(out), "batchnorm", {x.ptr(), gamma.ptr(), beta.ptr()});
    if (node->requires_grad) {
        const bool train = mode == Mode::Train;
        node->backward = [r, f, train, xhat = std::move(xhat), invstd = std::move(invstd)](Node& self) {
            auto& px = *self.parents[0];
            auto& pg = *self.parents[1];
            auto& pb = *self.parents[2];
            const double* dy = self.grad.data();
            const double* xh = xhat.data();
            std::vector<double> sum_dy(f, 0.0), sum_dy_xhat(f, 0.0);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < f; ++j) {
                    sum_dy[j] += dy[i * f + j];
                    sum_dy_xhat[j] += dy[i * f + j] * xh[i * f + j];
                }
            if (pg.requires_grad) {
                auto g = pg.grad_buffer();
                for (std::size_t j = 0; j < f; ++j) g[j] += sum_dy_xhat[j];
            }
            if (pb.requires_grad) {
                auto g = pb.grad_buffer();
                for (std::size_t j = 0; j < f; ++j) g[j] += sum_dy[j];
            }
            if (px.requires_grad) {
                double* g = px.grad_buffer().data();
                const double rn = static_cast<double>(r);
                std::vector<double> scale(f), shift(f), slope(f);
                for (std::size_t j = 0; j < f; ++j) {
                    scale[j] = pg.value[j] * invstd[j];
                    shift[j] = train ? sum_dy[j] / rn : 0.0;
                    slope[j] = train ? sum_dy_xhat[j] / rn : 0.0;
                }
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < f; ++j)
                        g[i * f + j] += scale[j] * (dy[i * f + j] - shift[j] - xh[i * f + j] * slope[j]);
            }
        };
    }
    return Tensor(node);
}

Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(0), "dense",
            "incompatible shapes " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    const std::size_t r = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
    require(b.size() == out_dim, "dense", "bias width mismatch");
    std::vector<double> out(r * out_dim);
    for (std::size_t i = 0; i < r; ++i) std::copy(b.value().begin(), b.value().end(), out.begin() + i * out_dim);
    gemm(false, false, r, out_dim, in, x.value().data(), w.value().data(), out.data(), true);
    auto node = make_node({r, out_dim}, std::move(out), "dense", {x.ptr(), w.ptr(), b.ptr()});
    if (node->requires_grad) {
        node->backward = [r, in, out_dim](Node& self) {
            auto& px = *self.parents[0];
            auto& pw = *self.parents[1];
            auto& pb = *self.parents[2];
            if (px.requires_grad)
                gemm(false, true, r, in, out_dim, self.grad.data(), pw.value.data(), px.grad_buffer().data(), true);
            if (pw.requires_grad)
                gemm(true, false, in, out_dim, r, px.value.data(), self.grad.data(), pw.grad_buffer().data(), true);
            if (pb.requires_grad) {
                auto g = pb.grad_buffer();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < out_dim; ++j) g[j] += self.grad[i * out_dim + j];
            }
        };
    }
    return Tensor(node);
}

Tensor& ParameterStore::add(const std::string& name, Shape shape, std::vector<double> init) {
    if (index_.count(name)) throw std::invalid_argument("parameter '" + name + "' already exists");
    const std::size_t n = init.size();
    index_[name] = params_.size();
    names_.push_back(name);
    params_.push_back(Tensor::parameter(std::move(shape), std::move(init)));
    moments_.emplace_back(std::vector<double>(n, 0.0), std::vector<double>(n, 0.0));
    return params_.back();
}

Tensor& ParameterStore::get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return params_[it->second];
}

const Tensor& ParameterStore::get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
    return params_[it->second];
}

std::size_t ParameterStore::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
}

void ParameterStore::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

void adam_step(ParameterStore& store, const AdamConfig& cfg) {
    for (std::size_t k = 0; k < store.params_.size(); ++k) {
        const auto& g = store.params_[k].node().grad;
        for (double v : g)
            if (!std::isfinite(v))
                throw SolverError(SolverError::Kind::Divergence,
                                  "non-finite gradient in parameter '" + store.names_[k] + "'");
    }
    ++store.step_;
    const double t = static_cast<double>(store.step_);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t k = 0; k < store.params_.size(); ++k) {
        auto& node = store.params_[k].node();
        if (node.grad.size() != node.value.size()) continue;
        auto& m = store.moments_[k].first;
        auto& v = store.moments_[k].second;
        for (std::size_t i = 0; i < node.value.size(); ++i) {
            const double g = node.grad[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            node.value[i] -= cfg.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.epsilon);
        }
    }
}

std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = (2.0 * rng.uniform() - 1.0) * limit;
    return w;
}

}  // namespace unrollsync::ad
