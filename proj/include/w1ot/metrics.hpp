// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include <json.hpp>

#include "w1ot/lipschitz_net.hpp"
#include "w1ot/stepsize_gan.hpp"

namespace w1ot {

/// RBF precisions gamma in k(a, b) = exp(-gamma ||a - b||^2).
inline const std::vector<double> kDefaultMmdScales{2.0, 1.0, 0.5, 0.1, 0.01, 0.005};

/// Mean over scales of the biased (V-statistic) squared MMD, clamped at 0.
double mmd_rbf(const Matrix& x, const Matrix& y, const std::vector<double>& scales = kDefaultMmdScales);

/// Squared Pearson correlation of the column-mean vectors.
double r2_feature_means(const Matrix& x, const Matrix& y);

/// Euclidean distance between column-mean vectors.
double l2_feature_means(const Matrix& x, const Matrix& y);

/// Fraction of sampled pairs whose displacement directions are (nearly)
/// opposite: cos(x1 - x2, T(x1) - T(x2)) <= cos_tol. `tx` holds T applied
/// row-wise to `x`.
double monotonicity_violation_rate(const Matrix& x, const Matrix& tx, std::size_t n_pairs, std::uint64_t seed,
                                   double cos_tol = -0.99);
double monotonicity_violation_rate(const TransportMap& map, const Matrix& x, std::size_t n_pairs,
                                   std::uint64_t seed, double cos_tol = -0.99);

struct GradNormStats {
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
};

GradNormStats gradient_norm_stats(const PotentialNet& f, const Matrix& x);

struct MetricsReport {
  double mmd = 0.0;
  double r2_means = 0.0;
  double l2_means = 0.0;
  double monotonicity_violation_rate = 0.0;
  double grad_norm_mean = 0.0;
  double grad_norm_min = 0.0;
  double grad_norm_max = 0.0;
  Index n_pred = 0;
  Index n_target = 0;
  std::vector<double> mmd_scales = kDefaultMmdScales;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
};

/// mmd, r2 and l2 of `pred` against `target`; other fields left at zero.
MetricsReport distribution_metrics(const Matrix& pred, const Matrix& target,
                                   const std::vector<double>& scales = kDefaultMmdScales);

}  // namespace w1ot
