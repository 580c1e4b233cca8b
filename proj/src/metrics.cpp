// SPDX-License-Identifier: Apache-2.0
#include "w1ot/metrics.hpp"

#include <cmath>
#include <limits>

#include "w1ot/error.hpp"
#include "w1ot/rng.hpp"

namespace w1ot {

namespace {

void require_same_dim(const Matrix& x, const Matrix& y, const char* op) {
  if (x.cols() != y.cols()) {
    throw ShapeError(std::string(op) + ": feature dimension mismatch " + ad::shape_string(x) + " vs " +
                     ad::shape_string(y));
  }
}

Matrix squared_distances(const Matrix& a, const Matrix& b) {
  const Eigen::VectorXd na = a.rowwise().squaredNorm();
  const Eigen::VectorXd nb = b.rowwise().squaredNorm();
  Matrix d = -2.0 * a * b.transpose();
  d.colwise() += na;
  d.rowwise() += nb.transpose();
  return d.cwiseMax(0.0);
}

double mean_kernel(const Matrix& sq, double gamma) {
  // Row-by-row accumulation in a fixed order.
  double total = 0.0;
  for (Index i = 0; i < sq.rows(); ++i) total += (-gamma * sq.row(i).array()).exp().sum();
  return total / static_cast<double>(sq.size());
}

}  // namespace

double mmd_rbf(const Matrix& x, const Matrix& y, const std::vector<double>& scales) {
  require_same_dim(x, y, "mmd_rbf");
  if (x.rows() < 2 || y.rows() < 2) throw UsageError("mmd_rbf: each sample needs at least 2 rows");
  if (scales.empty()) throw ConfigError("mmd_rbf: no kernel scales");
  const Matrix dxx = squared_distances(x, x);
  const Matrix dyy = squared_distances(y, y);
  const Matrix dxy = squared_distances(x, y);
  double total = 0.0;
  for (double gamma : scales) {
    if (!(gamma > 0.0)) throw ConfigError("mmd_rbf: kernel scales must be positive");
    total += mean_kernel(dxx, gamma) + mean_kernel(dyy, gamma) - 2.0 * mean_kernel(dxy, gamma);
  }
  return std::max(0.0, total / static_cast<double>(scales.size()));
}

double r2_feature_means(const Matrix& x, const Matrix& y) {
  require_same_dim(x, y, "r2_feature_means");
  if (x.cols() < 2) throw UsageError("r2_feature_means: need at least 2 features");
  if (x.rows() == 0 || y.rows() == 0) throw UsageError("r2_feature_means: empty input");
  const Eigen::VectorXd mx = x.colwise().mean().transpose();
  const Eigen::VectorXd my = y.colwise().mean().transpose();
  const Eigen::VectorXd cx = mx.array() - mx.mean();
  const Eigen::VectorXd cy = my.array() - my.mean();
  const double sx = cx.norm();
  const double sy = cy.norm();
  if (!(sx > 0.0) || !(sy > 0.0)) {
    throw NumericalError("r2_feature_means: constant mean vector, correlation undefined");
  }
  const double r = cx.dot(cy) / (sx * sy);
  return r * r;
}

double l2_feature_means(const Matrix& x, const Matrix& y) {
  require_same_dim(x, y, "l2_feature_means");
  if (x.rows() == 0 || y.rows() == 0) throw UsageError("l2_feature_means: empty input");
  return (x.colwise().mean() - y.colwise().mean()).norm();
}

double monotonicity_violation_rate(const Matrix& x, const Matrix& tx, std::size_t n_pairs, std::uint64_t seed,
                                   double cos_tol) {
  if (n_pairs < 1) throw UsageError("monotonicity: n_pairs must be >= 1");
  if (x.rows() != tx.rows() || x.cols() != tx.cols()) {
    throw ShapeError("monotonicity: x " + ad::shape_string(x) + " and T(x) " + ad::shape_string(tx) + " differ");
  }
  const Index n = x.rows();
  if (n < 2) throw UsageError("monotonicity: need at least 2 rows");
  Rng rng(mix_seed(seed, 41));
  const auto perm = rng.permutation(static_cast<std::size_t>(n));
  const std::size_t pool = std::min<std::size_t>(static_cast<std::size_t>(n), 2 * n_pairs);
  const bool disjoint = pool >= 2 * n_pairs;

  std::size_t used = 0;
  std::size_t violations = 0;
  for (std::size_t p = 0; p < n_pairs; ++p) {
    std::size_t a, b;
    if (disjoint) {
      a = perm[2 * p];
      b = perm[2 * p + 1];
    } else {
      a = perm[rng.index(pool)];
      do {
        b = perm[rng.index(pool)];
      } while (b == a);
    }
    const Eigen::RowVectorXd u = x.row(Index(a)) - x.row(Index(b));
    const Eigen::RowVectorXd v = tx.row(Index(a)) - tx.row(Index(b));
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu < 1e-12 || nv < 1e-12) continue;
    ++used;
    if (u.dot(v) / (nu * nv) <= cos_tol) ++violations;
  }
  if (used == 0) throw DataError("monotonicity: every sampled pair was degenerate");
  return static_cast<double>(violations) / static_cast<double>(used);
}

double monotonicity_violation_rate(const TransportMap& map, const Matrix& x, std::size_t n_pairs,
                                   std::uint64_t seed, double cos_tol) {
  return monotonicity_violation_rate(x, map.transport(x), n_pairs, seed, cos_tol);
}

GradNormStats gradient_norm_stats(const PotentialNet& f, const Matrix& x) {
  if (x.rows() == 0) throw UsageError("gradient_norm_stats: empty input");
  const Eigen::VectorXd norms = f.input_gradient(x).rowwise().norm();
  return {norms.mean(), norms.minCoeff(), norms.maxCoeff()};
}

nlohmann::json MetricsReport::to_json() const {
  return {{"mmd", mmd},
          {"r2_means", r2_means},
          {"l2_means", l2_means},
          {"monotonicity_violation_rate", monotonicity_violation_rate},
          {"grad_norm_mean", grad_norm_mean},
          {"grad_norm_min", grad_norm_min},
          {"grad_norm_max", grad_norm_max},
          {"n_pred", n_pred},
          {"n_target", n_target},
          {"mmd_scales", mmd_scales},
          {"seed", seed}};
}

MetricsReport distribution_metrics(const Matrix& pred, const Matrix& target, const std::vector<double>& scales) {
  MetricsReport r;
  r.mmd = mmd_rbf(pred, target, scales);
  r.r2_means = r2_feature_means(pred, target);
  r.l2_means = l2_feature_means(pred, target);
  r.n_pred = pred.rows();
  r.n_target = target.rows();
  r.mmd_scales = scales;
  return r;
}

}  // namespace w1ot
