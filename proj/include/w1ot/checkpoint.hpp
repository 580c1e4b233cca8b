// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <json.hpp>

#include "w1ot/run_config.hpp"
#include "w1ot/stepsize_gan.hpp"

namespace w1ot {

inline constexpr int kCheckpointFormatVersion = 1;

struct TrainingSummary {
  double final_dual_estimate = 0.0;
  long dual_iterations = 0;
  double final_gen_loss = 0.0;
  double final_disc_loss = 0.0;
  long gan_iterations = 0;
};

/// A fitted transport map plus the configuration that produced it. Raw
/// (pre-orthonormalization) weights are stored so loading rebuilds the
/// forward pass exactly. No timings are stored, so equal seeds give equal
/// files.
struct Checkpoint {
  RunConfig run_config;
  TransportMap map;
  std::optional<Discriminator> discriminator;
  TrainingSummary summary;

  nlohmann::json to_json() const;
  /// Throws ConfigError on a version or shape problem.
  static Checkpoint from_json(const nlohmann::json& j);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

Checkpoint make_checkpoint(const RunConfig& cfg, const W1OTFit& fit);

}  // namespace w1ot
