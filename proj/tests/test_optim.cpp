// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <limits>
#include <string>

#include "w1ot/error.hpp"
#include "w1ot/optim.hpp"

using namespace w1ot;
using ad::Matrix;

TEST_CASE("cosine schedule endpoints and midpoint") {
  CHECK(cosine_lr(0, 10000, 1e-2, 1e-4) == 1e-2);
  CHECK(cosine_lr(10000, 10000, 1e-2, 1e-4) == 1e-4);
  CHECK(cosine_lr(5000, 10000, 1e-2, 1e-4) == doctest::Approx(5.05e-3).epsilon(1e-12));
  CHECK(cosine_lr(12000, 10000, 1e-2, 1e-4) == 1e-4);
  double prev = 1.0;
  for (long t = 0; t <= 100; ++t) {
    const double lr = cosine_lr(t, 100, 1e-2, 1e-4);
    CHECK(lr <= prev);
    prev = lr;
  }
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
  ad::Parameter p("p", Matrix::Constant(2, 3, 0.7));
  Adam opt({&p}, {0.5, 0.5, 1e-8});
  for (int k = 0; k < 5; ++k) opt.step(1e-2);
  CHECK(p.value == Matrix::Constant(2, 3, 0.7));
  CHECK(opt.step_count() == 5);
}

TEST_CASE("adam first step moves by lr times the gradient sign") {
  ad::Parameter p("p", Matrix::Zero(1, 3));
  p.grad << 3.0, -0.2, 5e-3;
  Adam opt({&p}, {0.9, 0.999, 1e-8});
  opt.step(1e-2);
  // m_hat = g, v_hat = g^2, so the update is lr g / (|g| + eps).
  for (ad::Index j = 0; j < 3; ++j) {
    const double g = p.grad(0, j);
    CHECK(p.value(0, j) == doctest::Approx(-1e-2 * g / (std::abs(g) + 1e-8)).epsilon(1e-12));
  }
  CHECK(opt.first_moments()[0].rows() == 1);
  CHECK(opt.second_moments()[0].cols() == 3);
}

TEST_CASE("adam converges on a quadratic bowl") {
  Matrix target(1, 3);
  target << 1.0, -0.5, 0.25;
  ad::Parameter p("x", Matrix::Zero(1, 3));
  Adam opt({&p}, {});
  for (int k = 0; k < 500; ++k) {
    opt.zero_grad();
    p.grad = 2.0 * (p.value - target);
    opt.step(1e-2);
  }
  CHECK((p.value - target).norm() <= 1e-2);
}

TEST_CASE("adam rejects a non-finite gradient with diagnostics") {
  ad::Parameter p("layer.3.weight", Matrix::Zero(2, 2));
  Adam opt({&p}, {});
  opt.step(1e-2);
  p.grad(1, 0) = std::numeric_limits<double>::quiet_NaN();
  try {
    opt.step(1e-2);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("layer.3.weight") != std::string::npos);
    CHECK(msg.find("step 2") != std::string::npos);
  }
  CHECK(p.value.allFinite());
}
