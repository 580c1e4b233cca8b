// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "w1ot/autodiff.hpp"

namespace w1ot {

/// Cosine annealing from lr_max at t = 0 to lr_min at t = total. Steps past
/// `total` stay at lr_min.
double cosine_lr(long t, long total, double lr_max, double lr_min);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<ad::Parameter*> params, AdamConfig cfg);

  /// Applies one update from the accumulated `grad` of every parameter.
  /// Throws NumericalError naming the parameter if a gradient is not finite.
  void step(double lr);
  void zero_grad();

  long step_count() const { return step_; }
  const std::vector<ad::Matrix>& first_moments() const { return m_; }
  const std::vector<ad::Matrix>& second_moments() const { return v_; }

 private:
  std::vector<ad::Parameter*> params_;
  AdamConfig cfg_;
  std::vector<ad::Matrix> m_;
  std::vector<ad::Matrix> v_;
  long step_ = 0;
};

}  // namespace w1ot
