#pragma once

#include <cstddef>
#include <vector>

#include "coqac/autograd.hpp"

namespace coqac::nn {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Moments are shaped like the parameter set it
// was created for, in the same order.
class Adam {
 public:
  Adam(AdamConfig cfg, const ParameterSet& params);

  // One update from the gradients currently stored in params.
  void step(ParameterSet& params);

  std::size_t step_count() const { return t_; }
  const AdamConfig& config() const { return cfg_; }
  void set_learning_rate(double lr) { cfg_.learning_rate = lr; }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

 private:
  AdamConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::size_t t_ = 0;
};

}  // namespace coqac::nn
