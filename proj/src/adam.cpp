#include "coqac/adam.hpp"

#include <cmath>

#include "coqac/error.hpp"

namespace coqac::nn {

Adam::Adam(AdamConfig cfg, const ParameterSet& params) : cfg_(cfg) {
  for (const auto& p : params.all()) {
    m_.emplace_back(p.value.shape());
    v_.emplace_back(p.value.shape());
  }
}

void Adam::step(ParameterSet& params) {
  if (params.size() != m_.size()) {
    throw UsageError("Adam: parameter set has " + std::to_string(params.size()) +
                     " tensors, optimizer tracks " + std::to_string(m_.size()));
  }
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& p : params.all()) {
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    ++k;
    if (p.grad.shape() != p.value.shape()) continue;  // never touched by backward
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p.value[i] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.epsilon);
    }
  }
}

}  // namespace coqac::nn
