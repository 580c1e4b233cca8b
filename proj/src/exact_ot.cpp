// SPDX-License-Identifier: Apache-2.0
#include "w1ot/exact_ot.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "w1ot/dual_training.hpp"
#include "w1ot/error.hpp"

namespace w1ot {

double w1_1d(std::vector<double> x, std::vector<double> y) {
  if (x.size() != y.size()) {
    throw ShapeError("w1_1d: sample sizes differ (" + std::to_string(x.size()) + " vs " + std::to_string(y.size()) +
                     ")");
  }
  if (x.empty()) throw UsageError("w1_1d: empty samples");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  double total = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) total += std::abs(x[i] - y[i]);
  return total / static_cast<double>(x.size());
}

MatchingResult w1_matching(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows()) {
    throw ShapeError("w1_matching: row counts differ (" + std::to_string(x.rows()) + " vs " +
                     std::to_string(y.rows()) + "); subsample to equal n");
  }
  if (x.cols() != y.cols()) throw ShapeError("w1_matching: feature dimensions differ");
  const Index n = x.rows();
  if (n < 1) throw UsageError("w1_matching: empty samples");
  if (n > kMatchingMaxRows) {
    throw UsageError("w1_matching: n = " + std::to_string(n) + " exceeds the exact-solver limit of " +
                     std::to_string(kMatchingMaxRows) + "; subsample both sides");
  }

  Matrix cost(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) cost(i, j) = (x.row(i) - y.row(j)).norm();
  }

  // Shortest augmenting path with row/column potentials (1-based helpers,
  // index 0 is the virtual root).
  const double inf = std::numeric_limits<double>::infinity();
  const auto un = static_cast<std::size_t>(n);
  std::vector<double> u(un + 1, 0.0), v(un + 1, 0.0), minv(un + 1);
  std::vector<std::size_t> p(un + 1, 0), way(un + 1, 0);
  std::vector<char> used(un + 1);
  for (std::size_t i = 1; i <= un; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= un; ++j) {
        if (used[j]) continue;
        const double cur = cost(Index(i0 - 1), Index(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= un; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  MatchingResult result;
  result.assignment.assign(un, 0);
  for (std::size_t j = 1; j <= un; ++j) result.assignment[p[j] - 1] = static_cast<Index>(j - 1);
  double total = 0.0;
  for (Index i = 0; i < n; ++i) total += cost(i, result.assignment[static_cast<std::size_t>(i)]);
  result.cost = total / static_cast<double>(n);
  return result;
}

double assignment_cost(const Matrix& x, const Matrix& y, const std::vector<Index>& assignment) {
  if (x.rows() != y.rows() || static_cast<Index>(assignment.size()) != x.rows()) {
    throw ShapeError("assignment_cost: size mismatch");
  }
  double total = 0.0;
  for (Index i = 0; i < x.rows(); ++i) total += (x.row(i) - y.row(assignment[static_cast<std::size_t>(i)])).norm();
  return total / static_cast<double>(x.rows());
}

double dual_gap(const PotentialNet& f, const Matrix& x, const Matrix& y) {
  return w1_matching(x, y).cost - dual_estimate(f, x, y);
}

double diameter(const Matrix& x, const Matrix& y) {
  Matrix all(x.rows() + y.rows(), x.cols());
  all << x, y;
  double best = 0.0;
  for (Index i = 0; i < all.rows(); ++i) {
    for (Index j = i + 1; j < all.rows(); ++j) best = std::max(best, (all.row(i) - all.row(j)).squaredNorm());
  }
  return std::sqrt(best);
}

}  // namespace w1ot
