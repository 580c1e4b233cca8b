// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "w1ot/lipschitz_net.hpp"

namespace w1ot {

/// Largest n accepted by w1_matching.
inline constexpr Index kMatchingMaxRows = 2048;

struct MatchingResult {
  /// Mean Euclidean distance of the optimal bijection.
  double cost = 0.0;
  /// assignment[i] = target row matched to source row i.
  std::vector<Index> assignment;
};

/// Exact W1 between equal-size 1-D samples (sorted matching).
double w1_1d(std::vector<double> x, std::vector<double> y);

/// Exact W1 between equal-size empirical measures via min-cost assignment.
MatchingResult w1_matching(const Matrix& x, const Matrix& y);

/// Mean Euclidean distance of a given bijection.
double assignment_cost(const Matrix& x, const Matrix& y, const std::vector<Index>& assignment);

/// Exact W1 minus the dual estimate mean f(x) - mean f(y).
double dual_gap(const PotentialNet& f, const Matrix& x, const Matrix& y);

/// Largest pairwise distance over the union of rows (exact, O(n^2 d)).
double diameter(const Matrix& x, const Matrix& y);

}  // namespace w1ot
