// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <vector>

#include "w1ot/dual_training.hpp"
#include "w1ot/lipschitz_net.hpp"

namespace w1ot {

/// Unconstrained weight + bias pair of a plain feed-forward layer.
struct DenseLayer {
  ad::Parameter weight;  ///< d_out x d_in
  ad::Parameter bias;    ///< 1 x d_out
};

/// ReLU multilayer perceptron ending in a single linear unit.
class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(Index input_dim, const std::vector<Index>& hidden, std::uint64_t seed, const std::string& prefix);
  explicit DenseNet(std::vector<DenseLayer> layers);

  ad::Tensor forward(ad::Graph& g, const ad::Tensor& x, ParamMode mode);
  ad::Tensor forward(ad::Graph& g, const ad::Tensor& x) const;
  Matrix evaluate(const Matrix& x) const;

  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<ad::Parameter*> parameters();
  Index input_dim() const;

 private:
  std::vector<DenseLayer> layers_;
};

/// eta(x) = softplus(mlp(x)) >= 0.
class StepSizeNet {
 public:
  StepSizeNet() = default;
  /// The output bias starts at `initial_bias` so initial steps are small.
  StepSizeNet(Index input_dim, const std::vector<Index>& hidden, std::uint64_t seed, double initial_bias = -2.0);
  explicit StepSizeNet(DenseNet net) : net_(std::move(net)) {}

  ad::Tensor forward(ad::Graph& g, const ad::Tensor& x, ParamMode mode);
  ad::Tensor forward(ad::Graph& g, const ad::Tensor& x) const;
  /// m x 1 step sizes.
  Matrix evaluate(const Matrix& x) const;

  DenseNet& net() { return net_; }
  const DenseNet& net() const { return net_; }

 private:
  DenseNet net_;
};

/// D(x) = sigmoid(mlp(x)); losses are computed from the logits.
class Discriminator {
 public:
  Discriminator() = default;
  Discriminator(Index input_dim, const std::vector<Index>& hidden, std::uint64_t seed);
  explicit Discriminator(DenseNet net) : net_(std::move(net)) {}

  ad::Tensor logits(ad::Graph& g, const ad::Tensor& x, ParamMode mode);
  ad::Tensor logits(ad::Graph& g, const ad::Tensor& x) const;
  /// Probabilities clamped to [1e-12, 1 - 1e-12].
  Matrix probability(const Matrix& x) const;

  DenseNet& net() { return net_; }
  const DenseNet& net() const { return net_; }

 private:
  DenseNet net_;
};

/// grad f(x) / max(||grad f(x)||, floor) per row.
Matrix unit_directions(const PotentialNet& f, const Matrix& x, double floor = 1e-8);

/// T(x) = x - eta(x) * grad f(x) / max(||grad f(x)||, floor).
class TransportMap {
 public:
  TransportMap(PotentialNet potential, StepSizeNet step, double direction_floor = 1e-8);

  Matrix transport(const Matrix& x) const;
  Matrix directions(const Matrix& x) const { return unit_directions(potential_, x, floor_); }
  Matrix step_sizes(const Matrix& x) const { return step_.evaluate(x); }

  const PotentialNet& potential() const { return potential_; }
  const StepSizeNet& step() const { return step_; }
  double direction_floor() const { return floor_; }
  Index dim() const { return potential_.config().input_dim; }

 private:
  PotentialNet potential_;
  StepSizeNet step_;
  double floor_;
};

struct GanTrainConfig {
  long iterations = 10000;
  Index batch_size = 256;
  double lr = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.9;
  double adam_eps = 1e-8;
  int disc_steps_per_gen_step = 1;
  std::vector<Index> hidden{64, 64, 64, 64};
  double initial_step_bias = -2.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GanHistory {
  std::vector<double> gen_loss;
  std::vector<double> disc_loss;
};

/// -mean log D(fake), from logits: mean softplus(-z).
ad::Tensor generator_loss_from_logits(const ad::Tensor& fake_logits);
/// -mean log D(real) - mean log(1 - D(fake)), from logits.
ad::Tensor discriminator_loss_from_logits(const ad::Tensor& real_logits, const ad::Tensor& fake_logits);

double generator_loss(const Discriminator& d, const TransportMap& map, const Matrix& x_src);
double discriminator_loss(const Discriminator& d, const TransportMap& map, const Matrix& x_src,
                          const Matrix& y_tgt);

struct StepSizeFit {
  StepSizeNet step;
  Discriminator discriminator;
  GanHistory history;
};

/// Alternating discriminator / step-size updates with the potential frozen.
StepSizeFit train_stepsize(const PotentialNet& f, const Matrix& source, const Matrix& target,
                           const GanTrainConfig& cfg, double direction_floor = 1e-8);

struct W1OTFit {
  TransportMap map;
  Discriminator discriminator;
  TrainHistory dual_history;
  GanHistory gan_history;
  double dual_seconds = 0.0;
  double gan_seconds = 0.0;
};

/// train_potential followed by train_stepsize.
W1OTFit fit_w1ot(const Matrix& source, const Matrix& target, const DualTrainConfig& dual_cfg,
                 const PotentialNetConfig& net_cfg, const GanTrainConfig& gan_cfg);
W1OTFit fit_w1ot(const Dataset& source, const Dataset& target, const DualTrainConfig& dual_cfg,
                 const PotentialNetConfig& net_cfg, const GanTrainConfig& gan_cfg);

}  // namespace w1ot
