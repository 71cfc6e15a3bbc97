#pragma once

// Minimal reverse-mode automatic differentiation over dense double matrices.
//
// A Var is a handle to a node in a dynamically built expression graph. Each op
// records its parents and a closure that pushes the node's gradient back to
// them. Calling backward(loss) runs the closures in reverse topological order.
// Parameters enter the graph through use(); frozen parameters become constants
// so gradients still flow through them to their inputs but never into them.

#include "hyperload/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace hyperload {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/** A named learnable (or frozen) tensor with its accumulated gradient. */
struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
    bool trainable = true;

    Parameter() = default;
    Parameter(std::string n, Matrix v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())), trainable(train) {}

    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

namespace ad {

struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward;

    void accumulate(const Matrix& g) {
        if (grad.size() == 0) {
            grad = g;
        } else {
            grad += g;
        }
    }
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

    const Matrix& value() const { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& ptr() const { return node_; }
    explicit operator bool() const { return static_cast<bool>(node_); }

private:
    std::shared_ptr<Node> node_;
};

inline Var constant(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    return Var(std::move(n));
}

/// Leaf that collects its own gradient; used by tests and gradient checks.
inline Var variable(Matrix value) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = true;
    return Var(std::move(n));
}

/// Builds an op node. The closure receives the node itself; parents are in node.parents.
inline Var make_op(Matrix value, std::vector<Var> parents, std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& p : parents) {
        n->requires_grad = n->requires_grad || p.requires_grad();
        n->parents.push_back(p.ptr());
    }
    if (n->requires_grad) {
        n->backward = std::move(backward);
    }
    return Var(std::move(n));
}

/// Binds a Parameter into the graph. Gradients of trainable parameters are
/// added to Parameter::grad during backward().
inline Var use(Parameter& p) {
    if (!p.trainable) {
        return constant(p.value);
    }
    auto n = std::make_shared<Node>();
    n->value = p.value;
    n->requires_grad = true;
    Parameter* target = &p;
    n->backward = [target](Node& self) {
        if (target->grad.rows() != self.grad.rows() || target->grad.cols() != self.grad.cols()) {
            target->grad = Matrix::Zero(self.grad.rows(), self.grad.cols());
        }
        target->grad += self.grad;
    };
    return Var(std::move(n));
}

/// Runs reverse accumulation from a 1x1 scalar. `seed` scales the root gradient,
/// which lets callers average per-sample losses without building a sum node.
inline void backward(const Var& loss, double seed = 1.0) {
    if (loss.rows() != 1 || loss.cols() != 1) {
        throw ShapeError("backward() expects a 1x1 scalar loss");
    }
    if (!loss.requires_grad()) {
        return;
    }
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{&loss.node(), 0}};
    visited.insert(&loss.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss.node().grad = Matrix::Constant(1, 1, seed);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward && n->grad.size() != 0) {
            n->backward(*n);
        }
    }
}

namespace detail {
inline void require_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
    }
}
inline void push(Node& self, std::size_t i, const Matrix& g) {
    if (self.parents[i]->requires_grad) {
        self.parents[i]->accumulate(g);
    }
}
} // namespace detail

inline Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions " + std::to_string(a.cols()) + " and " +
                         std::to_string(b.rows()) + " differ");
    }
    return make_op(a.value() * b.value(), {a, b}, [](Node& self) {
        const Matrix& av = self.parents[0]->value;
        const Matrix& bv = self.parents[1]->value;
        detail::push(self, 0, self.grad * bv.transpose());
        detail::push(self, 1, av.transpose() * self.grad);
    });
}

inline Var add(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "add");
    return make_op(a.value() + b.value(), {a, b}, [](Node& self) {
        detail::push(self, 0, self.grad);
        detail::push(self, 1, self.grad);
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "sub");
    return make_op(a.value() - b.value(), {a, b}, [](Node& self) {
        detail::push(self, 0, self.grad);
        detail::push(self, 1, -self.grad);
    });
}

inline Var hadamard(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "hadamard");
    return make_op(a.value().cwiseProduct(b.value()), {a, b}, [](Node& self) {
        detail::push(self, 0, self.grad.cwiseProduct(self.parents[1]->value));
        detail::push(self, 1, self.grad.cwiseProduct(self.parents[0]->value));
    });
}

inline Var scale(const Var& a, double s) {
    return make_op(a.value() * s, {a}, [s](Node& self) { detail::push(self, 0, self.grad * s); });
}

/// a (n x c) + b (1 x c) broadcast over rows.
inline Var add_row(const Var& a, const Var& b) {
    if (b.rows() != 1 || b.cols() != a.cols()) {
        throw ShapeError("add_row: bias must be 1x" + std::to_string(a.cols()));
    }
    Matrix out = a.value().rowwise() + b.value().row(0);
    return make_op(std::move(out), {a, b}, [](Node& self) {
        detail::push(self, 0, self.grad);
        detail::push(self, 1, self.grad.colwise().sum());
    });
}

inline Var transpose(const Var& a) {
    return make_op(a.value().transpose(), {a}, [](Node& self) { detail::push(self, 0, self.grad.transpose()); });
}

/// tanh approximation of GELU; smooth everywhere, which keeps finite-difference checks clean.
inline Var gelu(const Var& a) {
    constexpr double c = 0.7978845608028654;
    constexpr double k = 0.044715;
    Matrix out = a.value().unaryExpr([](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x))); });
    return make_op(std::move(out), {a}, [](Node& self) {
        const Matrix& x = self.parents[0]->value;
        Matrix d = x.unaryExpr([](double v) {
            const double t = std::tanh(c * (v + k * v * v * v));
            return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * c * (1.0 + 3.0 * k * v * v);
        });
        detail::push(self, 0, self.grad.cwiseProduct(d));
    });
}

inline Var softmax_rows(const Var& a) {
    Matrix out(a.rows(), a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        const double mx = a.value().row(i).maxCoeff();
        RowVector e = (a.value().row(i).array() - mx).exp().matrix();
        out.row(i) = e / e.sum();
    }
    return make_op(std::move(out), {a}, [](Node& self) {
        const Matrix& y = self.value;
        Vector dots = (self.grad.cwiseProduct(y)).rowwise().sum();
        Matrix g = y.cwiseProduct(self.grad - dots.replicate(1, y.cols()));
        detail::push(self, 0, g);
    });
}

/// Row-wise layer normalization with affine gain and bias (both 1 x c).
inline Var layer_norm_rows(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5) {
    const Eigen::Index n = x.rows();
    const Eigen::Index c = x.cols();
    if (gamma.cols() != c || beta.cols() != c) {
        throw ShapeError("layer_norm_rows: affine parameters must match the row width");
    }
    Matrix xhat(n, c);
    Vector inv_std(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double mu = x.value().row(i).mean();
        const double var = (x.value().row(i).array() - mu).square().mean();
        inv_std(i) = 1.0 / std::sqrt(var + eps);
        xhat.row(i) = (x.value().row(i).array() - mu) * inv_std(i);
    }
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).rowwise() + beta.value().row(0).array();
    return make_op(std::move(out), {x, gamma, beta}, [xhat, inv_std](Node& self) {
        const RowVector g = self.parents[1]->value.row(0);
        if (self.parents[0]->requires_grad) {
            Matrix dxhat = self.grad.array().rowwise() * g.array();
            Matrix dx(dxhat.rows(), dxhat.cols());
            for (Eigen::Index i = 0; i < dxhat.rows(); ++i) {
                const double m1 = dxhat.row(i).mean();
                const double m2 = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
                dx.row(i) = inv_std(i) * (dxhat.row(i).array() - m1 - xhat.row(i).array() * m2);
            }
            self.parents[0]->accumulate(dx);
        }
        detail::push(self, 1, self.grad.cwiseProduct(xhat).colwise().sum());
        detail::push(self, 2, self.grad.colwise().sum());
    });
}

inline Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_rows: nothing to concatenate");
    }
    const Eigen::Index c = parts.front().cols();
    Eigen::Index total = 0;
    for (const auto& p : parts) {
        if (p.cols() != c) {
            throw ShapeError("concat_rows: column count mismatch (" + std::to_string(p.cols()) + " vs " +
                             std::to_string(c) + ")");
        }
        total += p.rows();
    }
    Matrix out(total, c);
    Eigen::Index r = 0;
    for (const auto& p : parts) {
        out.middleRows(r, p.rows()) = p.value();
        r += p.rows();
    }
    return make_op(std::move(out), parts, [](Node& self) {
        Eigen::Index row = 0;
        for (auto& parent : self.parents) {
            const Eigen::Index h = parent->value.rows();
            if (parent->requires_grad) {
                parent->accumulate(self.grad.middleRows(row, h));
            }
            row += h;
        }
    });
}

/// Mean over rows: (n x c) -> (1 x c).
inline Var mean_rows(const Var& a) {
    const double n = static_cast<double>(a.rows());
    return make_op(a.value().colwise().mean(), {a}, [n](Node& self) {
        detail::push(self, 0, self.grad.replicate(static_cast<Eigen::Index>(n), 1) / n);
    });
}

inline Var row(const Var& a, Eigen::Index i) {
    if (i < 0 || i >= a.rows()) {
        throw IndexError("row: index " + std::to_string(i) + " out of range");
    }
    return make_op(a.value().row(i), {a}, [i](Node& self) {
        Matrix g = Matrix::Zero(self.parents[0]->value.rows(), self.parents[0]->value.cols());
        g.row(i) = self.grad.row(0);
        self.parents[0]->accumulate(g);
    });
}

/// Row-major flatten: (n x c) -> (1 x n*c), element (i, j) lands at i*c + j.
inline Var flatten(const Var& a) {
    const Eigen::Index n = a.rows();
    const Eigen::Index c = a.cols();
    Matrix out(1, n * c);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.block(0, i * c, 1, c) = a.value().row(i);
    }
    return make_op(std::move(out), {a}, [n, c](Node& self) {
        Matrix g(n, c);
        for (Eigen::Index i = 0; i < n; ++i) {
            g.row(i) = self.grad.block(0, i * c, 1, c);
        }
        self.parents[0]->accumulate(g);
    });
}

/// Gathers rows of `table` by index; the backward pass scatter-adds.
inline Var gather_rows(const Var& table, const std::vector<int>& ids) {
    Matrix out(static_cast<Eigen::Index>(ids.size()), table.cols());
    for (std::size_t k = 0; k < ids.size(); ++k) {
        if (ids[k] < 0 || ids[k] >= table.rows()) {
            throw IndexError("gather_rows: id " + std::to_string(ids[k]) + " out of range");
        }
        out.row(static_cast<Eigen::Index>(k)) = table.value().row(ids[k]);
    }
    return make_op(std::move(out), {table}, [ids](Node& self) {
        Matrix g = Matrix::Zero(self.parents[0]->value.rows(), self.parents[0]->value.cols());
        for (std::size_t k = 0; k < ids.size(); ++k) {
            g.row(ids[k]) += self.grad.row(static_cast<Eigen::Index>(k));
        }
        self.parents[0]->accumulate(g);
    });
}

/// Columns [start, start + n).
inline Var cols(const Var& a, Eigen::Index start, Eigen::Index n) {
    if (start < 0 || n < 1 || start + n > a.cols()) {
        throw ShapeError("cols: range out of bounds");
    }
    return make_op(a.value().middleCols(start, n), {a}, [start, n](Node& self) {
        Matrix g = Matrix::Zero(self.parents[0]->value.rows(), self.parents[0]->value.cols());
        g.middleCols(start, n) = self.grad;
        self.parents[0]->accumulate(g);
    });
}

inline Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) {
        throw ShapeError("concat_cols: nothing to concatenate");
    }
    const Eigen::Index r = parts.front().rows();
    Eigen::Index total = 0;
    for (const auto& p : parts) {
        if (p.rows() != r) {
            throw ShapeError("concat_cols: row count mismatch");
        }
        total += p.cols();
    }
    Matrix out(r, total);
    Eigen::Index c = 0;
    for (const auto& p : parts) {
        out.middleCols(c, p.cols()) = p.value();
        c += p.cols();
    }
    return make_op(std::move(out), parts, [](Node& self) {
        Eigen::Index col = 0;
        for (auto& parent : self.parents) {
            const Eigen::Index w = parent->value.cols();
            if (parent->requires_grad) {
                parent->accumulate(self.grad.middleCols(col, w));
            }
            col += w;
        }
    });
}

/// First `n` rows.
inline Var top_rows(const Var& a, Eigen::Index n) {
    if (n < 1 || n > a.rows()) {
        throw ShapeError("top_rows: cannot take " + std::to_string(n) + " rows of " + std::to_string(a.rows()));
    }
    return make_op(a.value().topRows(n), {a}, [n](Node& self) {
        Matrix g = Matrix::Zero(self.parents[0]->value.rows(), self.parents[0]->value.cols());
        g.topRows(n) = self.grad;
        self.parents[0]->accumulate(g);
    });
}

/// Mean squared error against a constant target, both 1 x K.
inline Var mse(const Var& pred, const Matrix& target) {
    if (pred.rows() != target.rows() || pred.cols() != target.cols()) {
        throw ShapeError("mse: prediction and target shapes differ");
    }
    const double n = static_cast<double>(target.size());
    Matrix diff = pred.value() - target;
    Matrix out(1, 1);
    out(0, 0) = diff.squaredNorm() / n;
    return make_op(std::move(out), {pred}, [diff, n](Node& self) {
        detail::push(self, 0, diff * (2.0 * self.grad(0, 0) / n));
    });
}

} // namespace ad
} // namespace hyperload
