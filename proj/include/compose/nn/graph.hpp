#pragma once

#include <Eigen/Core>

#include <functional>
#include <memory>
#include <vector>

// Reverse-mode differentiation over dense double matrices. A graph is built
// eagerly by calling the ops below; backward() walks it once from a 1x1
// root. Nodes that do not depend on a gradient-tracked leaf carry no
// backward closure.
namespace compose::nn {

using Matrix = Eigen::MatrixXd;

struct Node {
    Matrix value;
    Matrix grad;  // empty until something flows in
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward;
    Matrix* sink = nullptr;  // parameter gradient accumulator for leaves
    bool requires_grad = false;
};

using Var = std::shared_ptr<Node>;

Var constant(Matrix value);
// Gradient-tracked leaf; backward() adds its gradient into *sink.
Var leaf(Matrix value, Matrix* sink);

// Generic op: the backward closure receives the output node and must
// accumulate into its inputs with accumulate().
Var custom(std::vector<Var> inputs, Matrix value, std::function<void(Node&)> backward);
void accumulate(Node& input, const Matrix& grad);

double scalar(const Var& v);

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var add_row(const Var& a, const Var& row);  // row is 1 x cols, broadcast down
Var mul_row(const Var& a, const Var& row);
Var mul_const(const Var& a, const Matrix& c);  // elementwise by a constant
Var add_const(const Var& a, const Matrix& c);
Var scalar_times(const Var& s, const Matrix& c);  // s is 1x1
Var gelu(const Var& a);                            // exact erf form
Var exp(const Var& a);
Var square(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);
Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& a, const Var& gamma, const Var& beta, double eps = 1e-5);
Var transpose(const Var& a);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var concat_rows(const std::vector<Var>& parts);
Var concat_cols(const std::vector<Var>& parts);
// Row-major reinterpretation to rows x cols.
Var reshape(const Var& a, Eigen::Index rows, Eigen::Index cols);
// Mean negative log-likelihood of softmax(logits) at the given class per row.
Var cross_entropy(const Var& logits, const std::vector<int>& labels);

void backward(const Var& root);

}  // namespace compose::nn
