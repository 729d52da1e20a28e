#pragma once

#include "compose/nn/graph.hpp"

#include <Eigen/Core>

#include <random>
#include <string>
#include <unordered_map>
#include <vector>

namespace compose::nn {

struct Parameter {
    std::string name;
    Matrix value;
    Matrix grad;
};

// Ordered collection of named parameter tensors. Layers refer to their
// tensors by index so the set can be copied freely.
class ParameterSet {
   public:
    int add(std::string name, Matrix init);

    Parameter& operator[](int idx) { return params_.at(static_cast<std::size_t>(idx)); }
    const Parameter& operator[](int idx) const { return params_.at(static_cast<std::size_t>(idx)); }
    int index_of(const std::string& name) const;

    std::size_t tensor_count() const noexcept { return params_.size(); }
    std::size_t scalar_count() const;

    // Tensors in insertion order, each flattened column-major.
    Eigen::VectorXd flatten() const;
    void assign(const Eigen::VectorXd& flat);
    Eigen::VectorXd flat_grad() const;
    // Name of the tensor owning flat index i.
    const std::string& name_at(std::size_t flat_index) const;
    void zero_grad();

    const std::vector<Parameter>& tensors() const noexcept { return params_; }

   private:
    std::vector<Parameter> params_;
    std::unordered_map<std::string, int> by_name_;
};

// Turns parameters into graph leaves, one per tensor per graph. With
// track_grad = false the leaves are constants and no backward state is
// built.
class Binder {
   public:
    Binder(ParameterSet& params, bool track_grad) : params_(params), track_(track_grad) {}

    Var operator()(int idx);
    bool tracking() const noexcept { return track_; }

   private:
    ParameterSet& params_;
    bool track_;
    std::unordered_map<int, Var> cache_;
};

using Rng = std::mt19937_64;

// y = x W + b, W is in x out.
struct Linear {
    int weight = -1;
    int bias = -1;

    static Linear create(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng, bool with_bias = true);
    Var operator()(Binder& b, const Var& x) const;
};

struct LayerNorm {
    int gamma = -1;
    int beta = -1;

    static LayerNorm create(ParameterSet& ps, const std::string& name, int dim);
    Var operator()(Binder& b, const Var& x) const;
};

// Scaled dot-product attention over rows. Keys carry no bias: a key bias
// shifts every logit of a query equally and has no effect after softmax.
struct MultiHeadAttention {
    Linear query, key, value, out;
    int heads = 1;

    static MultiHeadAttention create(ParameterSet& ps, const std::string& name, int dim, int heads, Rng& rng);
    Var operator()(Binder& b, const Var& x, const Var& memory) const;
};

struct FeedForward {
    Linear in, out;

    static FeedForward create(ParameterSet& ps, const std::string& name, int dim, int hidden, Rng& rng);
    Var operator()(Binder& b, const Var& x) const;
};

// Sinusoidal position table, rows = positions.
Matrix sinusoidal_positions(int count, int dim);

}  // namespace compose::nn
