#include "compose/nn/layers.hpp"

#include "compose/error.hpp"

#include <cmath>

namespace compose::nn {

int ParameterSet::add(std::string name, Matrix init) {
    if (by_name_.count(name)) throw InvalidArgument("nn", "duplicate parameter name " + name);
    const int idx = static_cast<int>(params_.size());
    by_name_.emplace(name, idx);
    Matrix grad = Matrix::Zero(init.rows(), init.cols());
    params_.push_back({std::move(name), std::move(init), std::move(grad)});
    return idx;
}

int ParameterSet::index_of(const std::string& name) const {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw InvalidArgument("nn", "unknown parameter " + name);
    return it->second;
}

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
}

Eigen::VectorXd ParameterSet::flatten() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(scalar_count()));
    Eigen::Index at = 0;
    for (const auto& p : params_) {
        out.segment(at, p.value.size()) = p.value.reshaped();
        at += p.value.size();
    }
    return out;
}

void ParameterSet::assign(const Eigen::VectorXd& flat) {
    if (flat.size() != static_cast<Eigen::Index>(scalar_count())) throw InvalidArgument("nn", "flat parameter size mismatch");
    Eigen::Index at = 0;
    for (auto& p : params_) {
        p.value.reshaped() = flat.segment(at, p.value.size());
        at += p.value.size();
    }
}

Eigen::VectorXd ParameterSet::flat_grad() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(scalar_count()));
    Eigen::Index at = 0;
    for (const auto& p : params_) {
        out.segment(at, p.grad.size()) = p.grad.reshaped();
        at += p.grad.size();
    }
    return out;
}

const std::string& ParameterSet::name_at(std::size_t flat_index) const {
    for (const auto& p : params_) {
        const auto n = static_cast<std::size_t>(p.value.size());
        if (flat_index < n) return p.name;
        flat_index -= n;
    }
    throw InvalidArgument("nn", "flat index out of range");
}

void ParameterSet::zero_grad() {
    for (auto& p : params_) p.grad.setZero();
}

Var Binder::operator()(int idx) {
    auto it = cache_.find(idx);
    if (it != cache_.end()) return it->second;
    Parameter& p = params_[idx];
    Var v = track_ ? leaf(p.value, &p.grad) : constant(p.value);
    cache_.emplace(idx, v);
    return v;
}

Linear Linear::create(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng, bool with_bias) {
    const double limit = std::sqrt(6.0 / (in + out));
    std::uniform_real_distribution<double> u(-limit, limit);
    Matrix w(in, out);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
        for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
    }
    Linear l;
    l.weight = ps.add(name + ".weight", std::move(w));
    if (with_bias) l.bias = ps.add(name + ".bias", Matrix::Zero(1, out));
    return l;
}

Var Linear::operator()(Binder& b, const Var& x) const {
    Var y = matmul(x, b(weight));
    return bias >= 0 ? add_row(y, b(bias)) : y;
}

LayerNorm LayerNorm::create(ParameterSet& ps, const std::string& name, int dim) {
    LayerNorm ln;
    ln.gamma = ps.add(name + ".gamma", Matrix::Ones(1, dim));
    ln.beta = ps.add(name + ".beta", Matrix::Zero(1, dim));
    return ln;
}

Var LayerNorm::operator()(Binder& b, const Var& x) const { return layer_norm_rows(x, b(gamma), b(beta)); }

MultiHeadAttention MultiHeadAttention::create(ParameterSet& ps, const std::string& name, int dim, int heads, Rng& rng) {
    if (heads <= 0 || dim % heads != 0) throw InvalidArgument("nn", "attention width must divide into heads");
    MultiHeadAttention m;
    m.query = Linear::create(ps, name + ".query", dim, dim, rng);
    m.key = Linear::create(ps, name + ".key", dim, dim, rng, false);
    m.value = Linear::create(ps, name + ".value", dim, dim, rng);
    m.out = Linear::create(ps, name + ".out", dim, dim, rng);
    m.heads = heads;
    return m;
}

Var MultiHeadAttention::operator()(Binder& b, const Var& x, const Var& memory) const {
    const Var q = query(b, x);
    const Var k = key(b, memory);
    const Var v = value(b, memory);
    const Eigen::Index dim = q->value.cols();
    const Eigen::Index dh = dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<Var> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        const Var qh = slice_cols(q, h * dh, dh);
        const Var kh = slice_cols(k, h * dh, dh);
        const Var vh = slice_cols(v, h * dh, dh);
        const Var attn = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
        outs.push_back(matmul(attn, vh));
    }
    return out(b, heads == 1 ? outs.front() : concat_cols(outs));
}

FeedForward FeedForward::create(ParameterSet& ps, const std::string& name, int dim, int hidden, Rng& rng) {
    return {Linear::create(ps, name + ".in", dim, hidden, rng), Linear::create(ps, name + ".out", hidden, dim, rng)};
}

Var FeedForward::operator()(Binder& b, const Var& x) const { return out(b, gelu(in(b, x))); }

Matrix sinusoidal_positions(int count, int dim) {
    Matrix p(count, dim);
    for (int t = 0; t < count; ++t) {
        for (int i = 0; i < dim; ++i) {
            const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
            p(t, i) = (i % 2 == 0) ? std::sin(t * freq) : std::cos(t * freq);
        }
    }
    return p;
}

}  // namespace compose::nn
