// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "w1ot/datasets.hpp"
#include "w1ot/lipschitz_net.hpp"
#include "w1ot/rng.hpp"

namespace w1ot {

struct DualTrainConfig {
  long iterations = 10000;
  Index batch_size = 256;
  double lr_max = 1e-2;
  double lr_min = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.5;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  /// Full-dataset dual estimate cadence.
  long eval_every = 100;

  void validate() const;
};

struct DualEvaluation {
  long iteration = 0;
  double dual_estimate = 0.0;
  double lr = 0.0;
  double elapsed_ms = 0.0;
};

struct TrainHistory {
  /// Mini-batch estimate E_src[f] - E_tgt[f], one entry per iteration.
  std::vector<double> batch_dual;
  std::vector<double> lr;
  /// Full-dataset estimates every `eval_every` iterations and at the end.
  std::vector<DualEvaluation> evaluations;
  /// Wall clock of each completed block of 1000 iterations.
  std::vector<double> ms_per_1000;

  std::size_t completed_iterations() const { return batch_dual.size(); }
  double final_dual_estimate() const;
};

/// -mean f(src) + mean f(tgt). Minimizing it maximizes the dual.
ad::Tensor dual_loss(PotentialNet& f, ad::Graph& g, const Matrix& src_batch, const Matrix& tgt_batch,
                     ParamMode mode = ParamMode::trainable);

/// mean f(src) - mean f(tgt) over full matrices.
double dual_estimate(const PotentialNet& f, const Matrix& src, const Matrix& tgt);

/// Called after every full-dataset evaluation.
using DualCheckpointFn = std::function<void(const DualEvaluation&, const PotentialNet&)>;

struct PotentialFit {
  PotentialNet potential;
  TrainHistory history;
};

/// Adam + cosine annealing on the dual loss with independent mini-batches
/// drawn with replacement from each side.
PotentialFit train_potential(const Matrix& source, const Matrix& target, const DualTrainConfig& cfg,
                             const PotentialNetConfig& net_cfg, const DualCheckpointFn& on_eval = {});
PotentialFit train_potential(const Dataset& source, const Dataset& target, const DualTrainConfig& cfg,
                             const PotentialNetConfig& net_cfg, const DualCheckpointFn& on_eval = {});

/// Samples `batch` row indices uniformly with replacement.
Matrix sample_rows(const Matrix& x, Index batch, Rng& rng);

}  // namespace w1ot
