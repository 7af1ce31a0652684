// SPDX-License-Identifier: Apache-2.0
#include "tsd/optim.hpp"

#include <cmath>

namespace tsd {

Adam::Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  state_.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::size_t n = params_[i].second.size();
    state_[i].m.assign(n, 0.0);
    state_[i].v.assign(n, 0.0);
  }
}

void Adam::zero_grad() {
  for (auto& [name, p] : params_) p.zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].second;
    const std::vector<double>& g = p.grad();
    std::vector<double> w = p.values();
    Moments& st = state_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double grad = (g.empty() ? 0.0 : g[j]) + cfg_.weight_decay * w[j];
      st.m[j] = cfg_.beta1 * st.m[j] + (1.0 - cfg_.beta1) * grad;
      st.v[j] = cfg_.beta2 * st.v[j] + (1.0 - cfg_.beta2) * grad * grad;
      const double m_hat = st.m[j] / bc1;
      const double v_hat = st.v[j] / bc2;
      w[j] -= cfg_.learning_rate * m_hat / (std::sqrt(v_hat) + cfg_.eps);
    }
    p.update_data(w);
  }
}

}  // namespace tsd
