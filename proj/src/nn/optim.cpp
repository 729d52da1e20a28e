#include "compose/nn/optim.hpp"

#include "compose/error.hpp"

#include <cmath>

namespace compose::nn {

AdamW::AdamW(const ParameterSet& params, AdamWConfig config) : config_(config) {
    for (const auto& p : params.tensors()) {
        m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
}

void AdamW::step(ParameterSet& params) {
    if (params.tensor_count() != m_.size()) throw InvalidState("nn", "optimizer built for a different parameter set");
    ++step_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < m_.size(); ++i) {
        Parameter& p = params[static_cast<int>(i)];
        m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p.grad;
        v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p.grad.cwiseAbs2();
        if (config_.lr == 0.0) continue;
        const Matrix update = (m_[i] / c1).array() / ((v_[i] / c2).array().sqrt() + config_.eps);
        p.value -= config_.lr * (update + config_.weight_decay * p.value);
    }
}

void AdamW::restore(long steps, std::vector<Matrix> m, std::vector<Matrix> v) {
    if (m.size() != v.size()) throw InvalidArgument("nn", "moment lists differ in length");
    step_ = steps;
    m_ = std::move(m);
    v_ = std::move(v);
}

}  // namespace compose::nn
