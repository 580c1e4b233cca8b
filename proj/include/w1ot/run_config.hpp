// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <json.hpp>

#include "w1ot/dual_training.hpp"
#include "w1ot/metrics.hpp"
#include "w1ot/stepsize_gan.hpp"

namespace w1ot {

struct MetricsConfig {
  std::vector<double> mmd_scales = kDefaultMmdScales;
  std::size_t monotonicity_pairs = 10000;
  double monotonicity_cos_tol = -0.99;

  void validate() const;
};

/// Everything `fit` needs besides the data. Every section is optional in
/// JSON; missing keys keep their defaults, unknown keys are errors.
struct RunConfig {
  DualTrainConfig dual;
  GanTrainConfig gan;
  PotentialNetConfig network;
  MetricsConfig metrics;
  std::uint64_t seed = 0;

  /// Copies `seed` into the stage configs.
  void apply_seed();
  /// Throws ConfigError on the first invalid field.
  void validate() const;

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace w1ot
