// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

#include "tsd/tensor.hpp"

namespace tsd {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;  // classic L2: added to the gradient
};

/// Adam with bias correction. Weight decay enters as an additive
/// lambda_wd * w term in the gradient before the moment updates.
class Adam {
 public:
  Adam(std::vector<std::pair<std::string, Tensor>> params, AdamConfig cfg);

  void zero_grad();
  void step();
  std::size_t steps_taken() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  std::vector<std::pair<std::string, Tensor>> params_;
  std::vector<Moments> state_;
  AdamConfig cfg_;
  std::size_t t_ = 0;
};

}  // namespace tsd
