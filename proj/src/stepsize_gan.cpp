// SPDX-License-Identifier: Apache-2.0
#include "w1ot/stepsize_gan.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <utility>

#include "w1ot/error.hpp"
#include "w1ot/optim.hpp"
#include "w1ot/rng.hpp"

namespace w1ot {

using ad::Graph;
using ad::Tensor;

// ---- DenseNet ----------------------------------------------------------------

DenseNet::DenseNet(Index input_dim, const std::vector<Index>& hidden, std::uint64_t seed,
                   const std::string& prefix) {
  if (input_dim < 1) throw ConfigError(prefix + ": input_dim must be >= 1");
  Rng rng(seed);
  std::vector<Index> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Index in = dims[l];
    const Index out = dims[l + 1];
    if (out < 1) throw ConfigError(prefix + ": hidden widths must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Matrix w(out, in);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    Matrix b(1, out);
    for (Index i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-bound, bound);
    layers_.push_back({ad::Parameter(prefix + "." + std::to_string(l) + ".weight", std::move(w)),
                       ad::Parameter(prefix + "." + std::to_string(l) + ".bias", std::move(b))});
  }
}

DenseNet::DenseNet(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ConfigError("dense net: no layers");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.value.rows() != 1 || layer.bias.value.cols() != layer.weight.value.rows()) {
      throw ShapeError("dense net: layer " + std::to_string(l) + " bias shape " +
                       ad::shape_string(layer.bias.value) + " does not match weight " +
                       ad::shape_string(layer.weight.value));
    }
    if (l > 0 && layer.weight.value.cols() != layers_[l - 1].weight.value.rows()) {
      throw ShapeError("dense net: layer " + std::to_string(l) + " input width mismatch");
    }
  }
  if (layers_.back().weight.value.rows() != 1) throw ShapeError("dense net: output layer must have one unit");
}

Index DenseNet::input_dim() const { return layers_.empty() ? 0 : layers_.front().weight.value.cols(); }

std::vector<ad::Parameter*> DenseNet::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

namespace {

template <typename Layers, typename Bind>
Tensor dense_forward(const Tensor& x, Layers& layers, Bind&& bind) {
  if (x.cols() != layers.front().weight.value.cols()) {
    throw ShapeError("dense net: input " + ad::shape_string(x.value()) + " does not match weight " +
                     ad::shape_string(layers.front().weight.value));
  }
  Tensor h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = ad::add(ad::matmul(h, ad::transpose(bind(layers[l].weight))), bind(layers[l].bias));
    if (l + 1 < layers.size()) h = ad::relu(h);
  }
  return h;
}

}  // namespace

Tensor DenseNet::forward(Graph& g, const Tensor& x, ParamMode mode) {
  if (mode == ParamMode::frozen) return std::as_const(*this).forward(g, x);
  return dense_forward(x, layers_, [&](ad::Parameter& p) { return g.parameter(p); });
}

Tensor DenseNet::forward(Graph& g, const Tensor& x) const {
  return dense_forward(x, layers_, [&](const ad::Parameter& p) { return g.constant(p.value); });
}

Matrix DenseNet::evaluate(const Matrix& x) const {
  if (x.cols() != input_dim()) {
    throw ShapeError("dense net: input " + ad::shape_string(x) + " does not match input_dim " +
                     std::to_string(input_dim()));
  }
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Matrix z = h * layers_[l].weight.value.transpose();
    z.rowwise() += layers_[l].bias.value.row(0);
    h = l + 1 < layers_.size() ? Matrix(z.cwiseMax(0.0)) : std::move(z);
  }
  return h;
}

// ---- StepSizeNet / Discriminator ----------------------------------------------------

StepSizeNet::StepSizeNet(Index input_dim, const std::vector<Index>& hidden, std::uint64_t seed,
                         double initial_bias)
    : net_(input_dim, hidden, seed, "stepsize") {
  net_.layers().back().bias.value.setConstant(initial_bias);
}

Tensor StepSizeNet::forward(Graph& g, const Tensor& x, ParamMode mode) {
  return ad::softplus(net_.forward(g, x, mode));
}

Tensor StepSizeNet::forward(Graph& g, const Tensor& x) const { return ad::softplus(net_.forward(g, x)); }

Matrix StepSizeNet::evaluate(const Matrix& x) const {
  return net_.evaluate(x).unaryExpr([](double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); });
}

Discriminator::Discriminator(Index input_dim, const std::vector<Index>& hidden, std::uint64_t seed)
    : net_(input_dim, hidden, seed, "discriminator") {}

Tensor Discriminator::logits(Graph& g, const Tensor& x, ParamMode mode) { return net_.forward(g, x, mode); }
Tensor Discriminator::logits(Graph& g, const Tensor& x) const { return net_.forward(g, x); }

Matrix Discriminator::probability(const Matrix& x) const {
  return net_.evaluate(x).unaryExpr([](double z) {
    const double p = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    return std::clamp(p, ad::kLogFloor, 1.0 - ad::kLogFloor);
  });
}

// ---- transport ------------------------------------------------------------------------

Matrix unit_directions(const PotentialNet& f, const Matrix& x, double floor) {
  Matrix grad = f.input_gradient(x);
  for (Index i = 0; i < grad.rows(); ++i) grad.row(i) /= std::max(grad.row(i).norm(), floor);
  return grad;
}

TransportMap::TransportMap(PotentialNet potential, StepSizeNet step, double direction_floor)
    : potential_(std::move(potential)), step_(std::move(step)), floor_(direction_floor) {
  if (!(floor_ > 0.0)) throw ConfigError("transport: direction floor must be positive");
  if (step_.net().input_dim() != potential_.config().input_dim) {
    throw ShapeError("transport: step-size net input dimension " + std::to_string(step_.net().input_dim()) +
                     " differs from potential input dimension " + std::to_string(potential_.config().input_dim));
  }
}

Matrix TransportMap::transport(const Matrix& x) const {
  if (x.cols() != dim()) {
    throw ShapeError("transport: input has " + std::to_string(x.cols()) + " features, map expects " +
                     std::to_string(dim()));
  }
  const Matrix dirs = directions(x);
  const Matrix eta = step_sizes(x);
  return x - Matrix(dirs.array().colwise() * eta.col(0).array());
}

// ---- losses ---------------------------------------------------------------------------

Tensor generator_loss_from_logits(const Tensor& fake_logits) {
  if (fake_logits.rows() == 0) throw UsageError("generator_loss: empty batch");
  return ad::mean(ad::softplus(ad::neg(fake_logits)));
}

Tensor discriminator_loss_from_logits(const Tensor& real_logits, const Tensor& fake_logits) {
  if (real_logits.rows() == 0 || fake_logits.rows() == 0) throw UsageError("discriminator_loss: empty batch");
  return ad::add(ad::mean(ad::softplus(ad::neg(real_logits))), ad::mean(ad::softplus(fake_logits)));
}

double generator_loss(const Discriminator& d, const TransportMap& map, const Matrix& x_src) {
  if (x_src.rows() == 0) throw UsageError("generator_loss: empty batch");
  Graph g;
  return generator_loss_from_logits(d.logits(g, g.constant(map.transport(x_src)))).value()(0, 0);
}

double discriminator_loss(const Discriminator& d, const TransportMap& map, const Matrix& x_src,
                          const Matrix& y_tgt) {
  if (x_src.rows() == 0 || y_tgt.rows() == 0) throw UsageError("discriminator_loss: empty batch");
  Graph g;
  const Tensor real = d.logits(g, g.constant(y_tgt));
  const Tensor fake = d.logits(g, g.constant(map.transport(x_src)));
  return discriminator_loss_from_logits(real, fake).value()(0, 0);
}

// ---- training ---------------------------------------------------------------------------

void GanTrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("gan: iterations must be >= 1");
  if (batch_size < 1) throw ConfigError("gan: batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("gan: lr must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("gan: adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("gan: adam_eps must be positive");
  if (disc_steps_per_gen_step < 1) throw ConfigError("gan: disc_steps_per_gen_step must be >= 1");
  for (Index w : hidden) {
    if (w < 1) throw ConfigError("gan: hidden widths must be positive");
  }
}

namespace {

std::vector<Index> draw_indices(Index n, Index batch, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(batch));
  for (auto& i : idx) i = static_cast<Index>(rng.index(static_cast<std::size_t>(n)));
  return idx;
}

Matrix gather(const Matrix& x, const std::vector<Index>& idx) {
  Matrix out(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = x.row(idx[i]);
  return out;
}

void check_finite(double v, const char* what, long iteration) {
  if (!std::isfinite(v)) {
    std::ostringstream os;
    os << "train_stepsize: non-finite " << what << " at iteration " << iteration;
    throw NumericalError(os.str());
  }
}

}  // namespace

StepSizeFit train_stepsize(const PotentialNet& f, const Matrix& source, const Matrix& target,
                           const GanTrainConfig& cfg, double direction_floor) {
  cfg.validate();
  if (source.rows() == 0 || target.rows() == 0) throw UsageError("train_stepsize: empty dataset");
  if (source.cols() != target.cols() || source.cols() != f.config().input_dim) {
    throw ShapeError("train_stepsize: dimension mismatch between source (" + std::to_string(source.cols()) +
                     "), target (" + std::to_string(target.cols()) + ") and potential (" +
                     std::to_string(f.config().input_dim) + ")");
  }
  const Index d = source.cols();
  StepSizeFit fit{StepSizeNet(d, cfg.hidden, mix_seed(cfg.seed, 201), cfg.initial_step_bias),
                  Discriminator(d, cfg.hidden, mix_seed(cfg.seed, 202)),
                  {}};
  StepSizeNet& eta = fit.step;
  Discriminator& disc = fit.discriminator;

  // The potential is frozen, so transport directions are fixed per sample.
  const Matrix directions = unit_directions(f, source, direction_floor);

  const AdamConfig adam_cfg{cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps};
  Adam gen_opt(eta.net().parameters(), adam_cfg);
  Adam disc_opt(disc.net().parameters(), adam_cfg);
  Rng rng(mix_seed(cfg.seed, 203));

  fit.history.gen_loss.reserve(static_cast<std::size_t>(cfg.iterations));
  fit.history.disc_loss.reserve(static_cast<std::size_t>(cfg.iterations));

  Graph g;
  for (long t = 0; t < cfg.iterations; ++t) {
    double disc_value = 0.0;
    for (int k = 0; k < cfg.disc_steps_per_gen_step; ++k) {
      const auto idx = draw_indices(source.rows(), cfg.batch_size, rng);
      const Matrix xs = gather(source, idx);
      const Matrix dirs = gather(directions, idx);
      const Matrix steps = eta.evaluate(xs);
      const Matrix fake = xs - Matrix(dirs.array().colwise() * steps.col(0).array());
      const Matrix real = gather(target, draw_indices(target.rows(), cfg.batch_size, rng));

      Matrix stacked(real.rows() + fake.rows(), d);
      stacked << real, fake;
      g.reset();
      disc_opt.zero_grad();
      const Tensor z = disc.logits(g, g.constant(std::move(stacked)), ParamMode::trainable);
      const Tensor loss = discriminator_loss_from_logits(ad::slice(z, 0, 0, real.rows(), 1),
                                                         ad::slice(z, real.rows(), 0, fake.rows(), 1));
      disc_value = loss.value()(0, 0);
      check_finite(disc_value, "discriminator loss", t);
      g.backward(loss);
      disc_opt.step(cfg.lr);
    }

    const auto idx = draw_indices(source.rows(), cfg.batch_size, rng);
    const Matrix xs = gather(source, idx);
    g.reset();
    gen_opt.zero_grad();
    const Tensor x = g.constant(xs);
    const Tensor step = eta.forward(g, x, ParamMode::trainable);
    const Tensor moved = ad::sub(x, ad::scale_rows(g.constant(gather(directions, idx)), step));
    const Tensor loss = generator_loss_from_logits(disc.logits(g, moved, ParamMode::frozen));
    const double gen_value = loss.value()(0, 0);
    check_finite(gen_value, "generator loss", t);
    g.backward(loss);
    gen_opt.step(cfg.lr);

    fit.history.gen_loss.push_back(gen_value);
    fit.history.disc_loss.push_back(disc_value);
  }
  return fit;
}

W1OTFit fit_w1ot(const Matrix& source, const Matrix& target, const DualTrainConfig& dual_cfg,
                 const PotentialNetConfig& net_cfg, const GanTrainConfig& gan_cfg) {
  using Clock = std::chrono::steady_clock;
  const auto t0 = Clock::now();
  PotentialFit pot = train_potential(source, target, dual_cfg, net_cfg);
  const auto t1 = Clock::now();
  StepSizeFit steps = train_stepsize(pot.potential, source, target, gan_cfg);
  const auto t2 = Clock::now();
  W1OTFit fit{TransportMap(std::move(pot.potential), std::move(steps.step)),
              std::move(steps.discriminator),
              std::move(pot.history),
              std::move(steps.history),
              std::chrono::duration<double>(t1 - t0).count(),
              std::chrono::duration<double>(t2 - t1).count()};
  return fit;
}

W1OTFit fit_w1ot(const Dataset& source, const Dataset& target, const DualTrainConfig& dual_cfg,
                 const PotentialNetConfig& net_cfg, const GanTrainConfig& gan_cfg) {
  return fit_w1ot(source.features, target.features, dual_cfg, net_cfg, gan_cfg);
}

}  // namespace w1ot
