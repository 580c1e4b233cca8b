// SPDX-License-Identifier: Apache-2.0
#include "w1ot/dual_training.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "w1ot/error.hpp"
#include "w1ot/optim.hpp"
#include "w1ot/rng.hpp"

namespace w1ot {

void DualTrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("dual: iterations must be >= 1");
  if (batch_size < 2) throw ConfigError("dual: batch_size must be >= 2");
  if (!(lr_min > 0.0 && lr_min <= lr_max)) throw ConfigError("dual: need 0 < lr_min <= lr_max");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("dual: adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("dual: adam_eps must be positive");
  if (eval_every < 1) throw ConfigError("dual: eval_every must be >= 1");
}

double TrainHistory::final_dual_estimate() const {
  if (evaluations.empty()) throw UsageError("history: no full-dataset evaluation recorded");
  return evaluations.back().dual_estimate;
}

ad::Tensor dual_loss(PotentialNet& f, ad::Graph& g, const Matrix& src_batch, const Matrix& tgt_batch,
                     ParamMode mode) {
  if (src_batch.rows() == 0 || tgt_batch.rows() == 0) throw UsageError("dual_loss: empty batch");
  if (src_batch.cols() != tgt_batch.cols()) {
    throw ShapeError("dual_loss: source " + ad::shape_string(src_batch) + " and target " +
                     ad::shape_string(tgt_batch) + " differ in feature dimension");
  }
  // One stacked forward so the orthonormalized weights are built once.
  Matrix stacked(src_batch.rows() + tgt_batch.rows(), src_batch.cols());
  stacked << src_batch, tgt_batch;
  const ad::Tensor out = f.forward(g, g.constant(std::move(stacked)), mode);
  const ad::Tensor fs = ad::slice(out, 0, 0, src_batch.rows(), 1);
  const ad::Tensor ft = ad::slice(out, src_batch.rows(), 0, tgt_batch.rows(), 1);
  return ad::sub(ad::mean(ft), ad::mean(fs));
}

double dual_estimate(const PotentialNet& f, const Matrix& src, const Matrix& tgt) {
  if (src.rows() == 0 || tgt.rows() == 0) throw UsageError("dual_estimate: empty input");
  const std::vector<Matrix> weights = f.effective_weights();
  return f.evaluate_with(weights, src).mean() - f.evaluate_with(weights, tgt).mean();
}

Matrix sample_rows(const Matrix& x, Index batch, Rng& rng) {
  Matrix out(batch, x.cols());
  const auto n = static_cast<std::size_t>(x.rows());
  for (Index i = 0; i < batch; ++i) out.row(i) = x.row(static_cast<Index>(rng.index(n)));
  return out;
}

PotentialFit train_potential(const Matrix& source, const Matrix& target, const DualTrainConfig& cfg,
                             const PotentialNetConfig& net_cfg, const DualCheckpointFn& on_eval) {
  cfg.validate();
  if (source.rows() == 0 || target.rows() == 0) throw UsageError("train_potential: empty dataset");
  if (source.cols() != target.cols()) {
    throw ShapeError("train_potential: source has " + std::to_string(source.cols()) + " features, target has " +
                     std::to_string(target.cols()));
  }
  if (net_cfg.input_dim != source.cols()) {
    throw ShapeError("train_potential: network input_dim " + std::to_string(net_cfg.input_dim) +
                     " does not match data dimension " + std::to_string(source.cols()));
  }

  PotentialFit fit{PotentialNet(net_cfg, mix_seed(cfg.seed, 101)), {}};
  PotentialNet& f = fit.potential;
  TrainHistory& hist = fit.history;
  Adam adam(f.parameters(), AdamConfig{cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
  Rng src_rng(mix_seed(cfg.seed, 102));
  Rng tgt_rng(mix_seed(cfg.seed, 103));

  hist.batch_dual.reserve(static_cast<std::size_t>(cfg.iterations));
  hist.lr.reserve(static_cast<std::size_t>(cfg.iterations));

  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto block_start = start;
  auto elapsed_ms = [](Clock::time_point a, Clock::time_point b) {
    return std::chrono::duration<double, std::milli>(b - a).count();
  };

  ad::Graph g;
  for (long t = 0; t < cfg.iterations; ++t) {
    const double lr = cosine_lr(t, cfg.iterations, cfg.lr_max, cfg.lr_min);
    const Matrix xs = sample_rows(source, cfg.batch_size, src_rng);
    const Matrix yt = sample_rows(target, cfg.batch_size, tgt_rng);

    g.reset();
    adam.zero_grad();
    const ad::Tensor loss = dual_loss(f, g, xs, yt);
    const double loss_value = loss.value()(0, 0);
    if (!std::isfinite(loss_value)) {
      std::ostringstream os;
      os << "train_potential: non-finite dual loss at iteration " << t;
      throw NumericalError(os.str());
    }
    g.backward(loss);
    try {
      adam.step(lr);
    } catch (const NumericalError& e) {
      std::ostringstream os;
      os << "train_potential: iteration " << t << ": " << e.what();
      throw NumericalError(os.str());
    }
    hist.batch_dual.push_back(-loss_value);
    hist.lr.push_back(lr);

    const long done = t + 1;
    if (done % 1000 == 0) {
      const auto now = Clock::now();
      hist.ms_per_1000.push_back(elapsed_ms(block_start, now));
      block_start = now;
    }
    if (done % cfg.eval_every == 0 || done == cfg.iterations) {
      DualEvaluation ev;
      ev.iteration = done;
      ev.dual_estimate = dual_estimate(f, source, target);
      ev.lr = lr;
      ev.elapsed_ms = elapsed_ms(start, Clock::now());
      if (!std::isfinite(ev.dual_estimate)) {
        throw NumericalError("train_potential: non-finite full-data dual estimate at iteration " +
                             std::to_string(done));
      }
      hist.evaluations.push_back(ev);
      if (on_eval) on_eval(ev, f);
    }
  }
  return fit;
}

PotentialFit train_potential(const Dataset& source, const Dataset& target, const DualTrainConfig& cfg,
                             const PotentialNetConfig& net_cfg, const DualCheckpointFn& on_eval) {
  return train_potential(source.features, target.features, cfg, net_cfg, on_eval);
}

}  // namespace w1ot
