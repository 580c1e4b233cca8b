// SPDX-License-Identifier: Apache-2.0
#include "w1ot/optim.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "w1ot/error.hpp"

namespace w1ot {

double cosine_lr(long t, long total, double lr_max, double lr_min) {
  if (total <= 0 || t >= total) return lr_min;
  if (t <= 0) return lr_max;
  const double progress = static_cast<double>(t) / static_cast<double>(total);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * progress));
}

Adam::Adam(std::vector<ad::Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  if (!(cfg_.eps > 0.0)) throw ConfigError("adam: eps must be positive");
  for (const ad::Parameter* p : params_) {
    m_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(ad::Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const ad::Parameter& p = *params_[i];
    if (p.grad.rows() != p.value.rows() || p.grad.cols() != p.value.cols()) {
      throw ShapeError("adam: gradient of '" + p.name + "' has shape " + ad::shape_string(p.grad) +
                       ", parameter has " + ad::shape_string(p.value));
    }
    if (!p.grad.allFinite()) {
      std::ostringstream os;
      os << "adam: non-finite gradient in parameter '" << p.name << "' at step " << step_ + 1;
      throw NumericalError(os.str());
    }
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ad::Parameter& p = *params_[i];
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * p.grad;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * p.grad.cwiseAbs2();
    p.value.array() -= lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + cfg_.eps);
  }
}

void Adam::zero_grad() {
  for (ad::Parameter* p : params_) p->zero_grad();
}

}  // namespace w1ot
