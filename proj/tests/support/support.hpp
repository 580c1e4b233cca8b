// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "w1ot/autodiff.hpp"
#include "w1ot/rng.hpp"

namespace w1ot::testing {

using ad::Index;
using ad::Matrix;

Matrix randn(Index rows, Index cols, Rng& rng, double stddev = 1.0);
Matrix uniform(Index rows, Index cols, Rng& rng, double lo, double hi);

/// Entries with pairwise gaps >= ~0.1 so nothing crosses a sort boundary
/// under finite-difference perturbation.
Matrix tie_free(Index rows, Index cols, Rng& rng);

/// One finite-difference case: a scalar function and a seeded input.
struct GradCase {
  std::string name;
  std::function<Matrix(Rng&)> input;
  /// Builds the scalar from the variable; `rng` supplies fixed constants
  /// and is reseeded identically for every evaluation.
  std::function<ad::Tensor(ad::Graph&, const ad::Tensor&, Rng&)> f;
};

/// Every differentiable operation, plus the orthonormalization routes and
/// composed networks.
const std::vector<GradCase>& grad_cases();

/// grad_check of `c` at the input drawn from `seed`.
double run_grad_case(const GradCase& c, std::uint64_t seed);

/// Brute-force min-cost perfect matching by enumerating permutations.
double brute_force_w1(const Matrix& x, const Matrix& y);

}  // namespace w1ot::testing
