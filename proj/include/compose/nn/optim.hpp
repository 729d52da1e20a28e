#pragma once

#include "compose/nn/layers.hpp"

#include <vector>

namespace compose::nn {

struct AdamWConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Adam with decoupled weight decay. A zero learning rate leaves every
// parameter bit-identical.
class AdamW {
   public:
    AdamW() = default;
    AdamW(const ParameterSet& params, AdamWConfig config);

    void step(ParameterSet& params);

    const AdamWConfig& config() const noexcept { return config_; }
    long steps() const noexcept { return step_; }
    const std::vector<Matrix>& first_moments() const noexcept { return m_; }
    const std::vector<Matrix>& second_moments() const noexcept { return v_; }

    // Checkpoint restore.
    void restore(long steps, std::vector<Matrix> m, std::vector<Matrix> v);

   private:
    AdamWConfig config_;
    std::vector<Matrix> m_, v_;
    long step_ = 0;
};

}  // namespace compose::nn
