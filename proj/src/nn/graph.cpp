#include "compose/nn/graph.hpp"

#include "compose/error.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

namespace compose::nn {

namespace {

Var make(Matrix value, std::vector<Var> inputs) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (const auto& in : inputs) n->requires_grad = n->requires_grad || in->requires_grad;
    n->inputs = std::move(inputs);
    return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a->value.rows() != b->value.rows() || a->value.cols() != b->value.cols()) {
        throw InvalidArgument("nn", std::string(op) + ": shape mismatch " + std::to_string(a->value.rows()) + "x" +
                                        std::to_string(a->value.cols()) + " vs " + std::to_string(b->value.rows()) +
                                        "x" + std::to_string(b->value.cols()));
    }
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix reshape_rm(const Matrix& m, Eigen::Index rows, Eigen::Index cols) {
    const RowMajor rm = m;
    return Eigen::Map<const RowMajor>(rm.data(), rows, cols);
}

}  // namespace

void accumulate(Node& input, const Matrix& grad) {
    if (!input.requires_grad) return;
    if (input.grad.size() == 0) {
        input.grad = grad;
    } else {
        input.grad += grad;
    }
}

Var constant(Matrix value) { return make(std::move(value), {}); }

Var leaf(Matrix value, Matrix* sink) {
    auto n = make(std::move(value), {});
    n->requires_grad = true;
    n->sink = sink;
    return n;
}

Var custom(std::vector<Var> inputs, Matrix value, std::function<void(Node&)> backward_fn) {
    auto n = make(std::move(value), std::move(inputs));
    if (n->requires_grad) n->backward = std::move(backward_fn);
    return n;
}

double scalar(const Var& v) {
    if (v->value.size() != 1) throw InvalidArgument("nn", "scalar() on a non 1x1 value");
    return v->value(0, 0);
}

Var matmul(const Var& a, const Var& b) {
    if (a->value.cols() != b->value.rows()) throw InvalidArgument("nn", "matmul: inner dimensions differ");
    return custom({a, b}, a->value * b->value, [](Node& n) {
        accumulate(*n.inputs[0], n.grad * n.inputs[1]->value.transpose());
        accumulate(*n.inputs[1], n.inputs[0]->value.transpose() * n.grad);
    });
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return custom({a, b}, a->value + b->value, [](Node& n) {
        accumulate(*n.inputs[0], n.grad);
        accumulate(*n.inputs[1], n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return custom({a, b}, a->value - b->value, [](Node& n) {
        accumulate(*n.inputs[0], n.grad);
        accumulate(*n.inputs[1], -n.grad);
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a, b, "mul");
    return custom({a, b}, a->value.cwiseProduct(b->value), [](Node& n) {
        accumulate(*n.inputs[0], n.grad.cwiseProduct(n.inputs[1]->value));
        accumulate(*n.inputs[1], n.grad.cwiseProduct(n.inputs[0]->value));
    });
}

Var scale(const Var& a, double s) {
    return custom({a}, a->value * s, [s](Node& n) { accumulate(*n.inputs[0], n.grad * s); });
}

Var add_scalar(const Var& a, double s) {
    return custom({a}, (a->value.array() + s).matrix(), [](Node& n) { accumulate(*n.inputs[0], n.grad); });
}

Var add_row(const Var& a, const Var& row) {
    if (row->value.rows() != 1 || row->value.cols() != a->value.cols()) {
        throw InvalidArgument("nn", "add_row: row must be 1 x cols");
    }
    return custom({a, row}, a->value.rowwise() + row->value.row(0), [](Node& n) {
        accumulate(*n.inputs[0], n.grad);
        accumulate(*n.inputs[1], n.grad.colwise().sum());
    });
}

Var mul_row(const Var& a, const Var& row) {
    if (row->value.rows() != 1 || row->value.cols() != a->value.cols()) {
        throw InvalidArgument("nn", "mul_row: row must be 1 x cols");
    }
    Matrix v = a->value.array().rowwise() * row->value.row(0).array();
    return custom({a, row}, std::move(v), [](Node& n) {
        const auto& x = n.inputs[0]->value;
        const auto& r = n.inputs[1]->value;
        accumulate(*n.inputs[0], (n.grad.array().rowwise() * r.row(0).array()).matrix());
        accumulate(*n.inputs[1], n.grad.cwiseProduct(x).colwise().sum());
    });
}

Var mul_const(const Var& a, const Matrix& c) {
    if (a->value.rows() != c.rows() || a->value.cols() != c.cols()) throw InvalidArgument("nn", "mul_const: shape mismatch");
    return custom({a}, a->value.cwiseProduct(c), [c](Node& n) { accumulate(*n.inputs[0], n.grad.cwiseProduct(c)); });
}

Var add_const(const Var& a, const Matrix& c) {
    if (a->value.rows() != c.rows() || a->value.cols() != c.cols()) throw InvalidArgument("nn", "add_const: shape mismatch");
    return custom({a}, a->value + c, [](Node& n) { accumulate(*n.inputs[0], n.grad); });
}

Var scalar_times(const Var& s, const Matrix& c) {
    if (s->value.size() != 1) throw InvalidArgument("nn", "scalar_times: s must be 1x1");
    return custom({s}, s->value(0, 0) * c, [c](Node& n) {
        accumulate(*n.inputs[0], Matrix::Constant(1, 1, n.grad.cwiseProduct(c).sum()));
    });
}

Var gelu(const Var& a) {
    Matrix v = a->value.unaryExpr([](double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); });
    return custom({a}, std::move(v), [](Node& n) {
        const Matrix d = n.inputs[0]->value.unaryExpr([](double x) {
            const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
            const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
            return cdf + x * pdf;
        });
        accumulate(*n.inputs[0], n.grad.cwiseProduct(d));
    });
}

Var exp(const Var& a) {
    return custom({a}, a->value.array().exp().matrix(),
                  [](Node& n) { accumulate(*n.inputs[0], n.grad.cwiseProduct(n.value)); });
}

Var square(const Var& a) {
    return custom({a}, a->value.cwiseAbs2(),
                  [](Node& n) { accumulate(*n.inputs[0], 2.0 * n.grad.cwiseProduct(n.inputs[0]->value)); });
}

Var sum(const Var& a) {
    return custom({a}, Matrix::Constant(1, 1, a->value.sum()), [](Node& n) {
        const auto& x = n.inputs[0]->value;
        accumulate(*n.inputs[0], Matrix::Constant(x.rows(), x.cols(), n.grad(0, 0)));
    });
}

Var mean(const Var& a) {
    const double count = static_cast<double>(a->value.size());
    return custom({a}, Matrix::Constant(1, 1, a->value.sum() / count), [count](Node& n) {
        const auto& x = n.inputs[0]->value;
        accumulate(*n.inputs[0], Matrix::Constant(x.rows(), x.cols(), n.grad(0, 0) / count));
    });
}

Var softmax_rows(const Var& a) {
    Matrix y = a->value;
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
        const double m = y.row(r).maxCoeff();
        y.row(r) = (y.row(r).array() - m).exp().matrix();
        y.row(r) /= y.row(r).sum();
    }
    return custom({a}, std::move(y), [](Node& n) {
        const Matrix& y = n.value;
        const Eigen::VectorXd dot = n.grad.cwiseProduct(y).rowwise().sum();
        accumulate(*n.inputs[0], (y.array() * (n.grad.colwise() - dot).array()).matrix());
    });
}

Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps) {
    const Eigen::Index cols = a->value.cols();
    if (gamma->value.rows() != 1 || gamma->value.cols() != cols || beta->value.rows() != 1 ||
        beta->value.cols() != cols) {
        throw InvalidArgument("nn", "layer_norm_rows: gamma/beta must be 1 x cols");
    }
    const Eigen::VectorXd mu = a->value.rowwise().mean();
    const Matrix centered = a->value.colwise() - mu;
    const Eigen::VectorXd inv =
        ((centered.cwiseAbs2().rowwise().sum() / static_cast<double>(cols)).array() + eps).rsqrt().matrix();
    Matrix xhat = centered.array().colwise() * inv.array();
    Matrix y = (xhat.array().rowwise() * gamma->value.row(0).array()).rowwise() + beta->value.row(0).array();
    return custom({a, gamma, beta}, std::move(y), [xhat = std::move(xhat), inv, cols](Node& n) {
        const Matrix& g = n.grad;
        accumulate(*n.inputs[1], g.cwiseProduct(xhat).colwise().sum());
        accumulate(*n.inputs[2], g.colwise().sum());
        if (!n.inputs[0]->requires_grad) return;
        const Matrix dxhat = g.array().rowwise() * n.inputs[1]->value.row(0).array();
        const Eigen::VectorXd s1 = dxhat.rowwise().sum();
        const Eigen::VectorXd s2 = dxhat.cwiseProduct(xhat).rowwise().sum();
        const double c = static_cast<double>(cols);
        Matrix dx = (c * dxhat).colwise() - s1;
        dx -= (xhat.array().colwise() * s2.array()).matrix();
        dx = (dx.array().colwise() * (inv.array() / c)).matrix();
        accumulate(*n.inputs[0], dx);
    });
}

Var transpose(const Var& a) {
    return custom({a}, a->value.transpose(), [](Node& n) { accumulate(*n.inputs[0], n.grad.transpose()); });
}

Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a->value.rows()) throw InvalidArgument("nn", "slice_rows out of range");
    return custom({a}, a->value.middleRows(start, count), [start, count](Node& n) {
        const auto& x = n.inputs[0]->value;
        Matrix g = Matrix::Zero(x.rows(), x.cols());
        g.middleRows(start, count) = n.grad;
        accumulate(*n.inputs[0], g);
    });
}

Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a->value.cols()) throw InvalidArgument("nn", "slice_cols out of range");
    return custom({a}, a->value.middleCols(start, count), [start, count](Node& n) {
        const auto& x = n.inputs[0]->value;
        Matrix g = Matrix::Zero(x.rows(), x.cols());
        g.middleCols(start, count) = n.grad;
        accumulate(*n.inputs[0], g);
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw InvalidArgument("nn", "concat_rows of nothing");
    const Eigen::Index cols = parts.front()->value.cols();
    Eigen::Index rows = 0;
    for (const auto& p : parts) {
        if (p->value.cols() != cols) throw InvalidArgument("nn", "concat_rows: column counts differ");
        rows += p->value.rows();
    }
    Matrix v(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleRows(at, p->value.rows()) = p->value;
        at += p->value.rows();
    }
    return custom(parts, std::move(v), [](Node& n) {
        Eigen::Index at = 0;
        for (auto& in : n.inputs) {
            const auto r = in->value.rows();
            accumulate(*in, n.grad.middleRows(at, r));
            at += r;
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw InvalidArgument("nn", "concat_cols of nothing");
    const Eigen::Index rows = parts.front()->value.rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p->value.rows() != rows) throw InvalidArgument("nn", "concat_cols: row counts differ");
        cols += p->value.cols();
    }
    Matrix v(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
        v.middleCols(at, p->value.cols()) = p->value;
        at += p->value.cols();
    }
    return custom(parts, std::move(v), [](Node& n) {
        Eigen::Index at = 0;
        for (auto& in : n.inputs) {
            const auto c = in->value.cols();
            accumulate(*in, n.grad.middleCols(at, c));
            at += c;
        }
    });
}

Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols) {
    if (rows * cols != a->value.size()) throw InvalidArgument("nn", "reshape changes element count");
    return custom({a}, reshape_rm(a->value, rows, cols), [](Node& n) {
        const auto& x = n.inputs[0]->value;
        accumulate(*n.inputs[0], reshape_rm(n.grad, x.rows(), x.cols()));
    });
}

Var cross_entropy(const Var& logits, const std::vector<int>& labels) {
    const auto& z = logits->value;
    if (static_cast<Eigen::Index>(labels.size()) != z.rows()) throw InvalidArgument("nn", "cross_entropy: label count");
    Matrix p(z.rows(), z.cols());
    double loss = 0.0;
    for (Eigen::Index r = 0; r < z.rows(); ++r) {
        const int y = labels[static_cast<std::size_t>(r)];
        if (y < 0 || y >= z.cols()) throw InvalidArgument("nn", "cross_entropy: label out of range");
        const double m = z.row(r).maxCoeff();
        p.row(r) = (z.row(r).array() - m).exp().matrix();
        const double total = p.row(r).sum();
        p.row(r) /= total;
        loss += std::log(total) + m - z(r, y);
    }
    const double count = static_cast<double>(z.rows());
    return custom({logits}, Matrix::Constant(1, 1, loss / count), [p = std::move(p), labels, count](Node& n) {
        Matrix g = p;
        for (std::size_t r = 0; r < labels.size(); ++r) g(static_cast<Eigen::Index>(r), labels[r]) -= 1.0;
        accumulate(*n.inputs[0], g * (n.grad(0, 0) / count));
    });
}

void backward(const Var& root) {
    if (root->value.size() != 1) throw InvalidArgument("nn", "backward() needs a 1x1 root");
    if (!root->requires_grad) return;

    // iterative post-order DFS
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.get(), 0}};
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->grad = Matrix::Ones(1, 1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->grad.size() == 0) continue;
        if (n->backward) n->backward(*n);
        if (n->sink) *n->sink += n->grad;
    }
}

}  // namespace compose::nn
