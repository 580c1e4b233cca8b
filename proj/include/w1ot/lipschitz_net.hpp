// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "w1ot/autodiff.hpp"

namespace w1ot {

using ad::Index;
using ad::Matrix;

enum class OrthoMethod { bjorck, cayley };

std::string to_string(OrthoMethod m);
OrthoMethod ortho_method_from_string(const std::string& s);

/// Whether network parameters enter a graph as trainable leaves or constants.
enum class ParamMode { trainable, frozen };

// ---- orthonormalization ----------------------------------------------------

/// Largest singular value estimate from `iters` power iterations.
double spectral_norm_estimate(const Matrix& m, int iters = 20);

/// Björck iteration W <- W (I + beta (I - W^T W)), written so the Gram
/// product is formed on the short side of a rectangular W. Input should
/// already have spectral norm <= 1.
ad::Tensor bjorck_orthonormalize(const ad::Tensor& m, int iters, double beta = 0.5);
Matrix bjorck_orthonormalize(const Matrix& m, int iters, double beta = 0.5);

/// Divides `m` by (sigma + 1e-6), sigma from a 20-step power iteration.
/// The scale is treated as a constant for differentiation.
ad::Tensor spectral_prescale(const ad::Tensor& m);

/// Top-left d_out x d_in block of the Cayley transform of the skew part of
/// `m` zero-padded to a square. Switches to a Woodbury low-rank route when
/// the padding dominates; both routes compute the same matrix.
ad::Tensor cayley_orthonormalize(const ad::Tensor& m);
Matrix cayley_orthonormalize(const Matrix& m);

/// Square-embedding route only (reference for the low-rank route).
Matrix cayley_orthonormalize_dense(const Matrix& m);

/// ||W W^T - I||_F for wide W, ||W^T W - I||_F for tall W.
double orthonormality_defect(const Matrix& w);

// ---- layers and network ------------------------------------------------------

struct OrthonormalLayer {
  ad::Parameter weight;  ///< raw d_out x d_in, orthonormalized on every forward
  ad::Parameter bias;    ///< 1 x d_out
  OrthoMethod method = OrthoMethod::cayley;
  int bjorck_iters = 40;
  double bjorck_beta = 0.5;

  Index in_dim() const { return weight.value.cols(); }
  Index out_dim() const { return weight.value.rows(); }

  /// Orthonormalized weight inside `g`. A single output row is normalized
  /// to unit length instead.
  ad::Tensor effective_weight(ad::Graph& g, ParamMode mode);
  ad::Tensor effective_weight(ad::Graph& g) const;
  Matrix effective_weight() const;

  /// h W^T + b.
  ad::Tensor forward(ad::Graph& g, const ad::Tensor& h, ParamMode mode);
  /// Frozen forward: parameters enter as constants.
  ad::Tensor forward(ad::Graph& g, const ad::Tensor& h) const;
};

struct PotentialNetConfig {
  Index input_dim = 2;
  std::vector<Index> hidden{64, 64, 64, 64};
  Index group_size = 4;
  OrthoMethod method = OrthoMethod::cayley;
  int bjorck_iters = 40;
  double bjorck_beta = 0.5;

  /// Throws ConfigError on bad widths or a degenerate group size.
  void validate() const;
};

/// 1-Lipschitz scalar network: orthonormal linear layers with GroupSort
/// between them and a linear unit-norm output row.
class PotentialNet {
 public:
  PotentialNet(const PotentialNetConfig& cfg, std::uint64_t seed);
  /// Rebuild from stored layers (checkpoint loading).
  PotentialNet(const PotentialNetConfig& cfg, std::vector<OrthonormalLayer> layers);

  const PotentialNetConfig& config() const { return cfg_; }
  std::vector<OrthonormalLayer>& layers() { return layers_; }
  const std::vector<OrthonormalLayer>& layers() const { return layers_; }
  std::vector<ad::Parameter*> parameters();

  /// m x d -> m x 1.
  ad::Tensor forward(ad::Graph& g, const ad::Tensor& x, ParamMode mode);
  ad::Tensor forward(ad::Graph& g, const ad::Tensor& x) const;
  Matrix evaluate(const Matrix& x) const;
  /// Per-row gradient of the output w.r.t. the input row; parameters untouched.
  Matrix input_gradient(const Matrix& x) const;

  std::vector<Matrix> effective_weights() const;
  /// Forward pass with explicitly supplied effective weights (no
  /// orthonormalization); used to audit arbitrary weight sets.
  Matrix evaluate_with(const std::vector<Matrix>& weights, const Matrix& x) const;

 private:
  PotentialNetConfig cfg_;
  std::vector<OrthonormalLayer> layers_;
};

struct Box {
  Matrix lower;  ///< 1 x d
  Matrix upper;  ///< 1 x d

  static Box bounding(const Matrix& x, double margin = 0.0);
};

struct LipschitzAudit {
  double max_ratio = 0.0;
  std::size_t pairs_used = 0;

  bool violated(double tolerance = 1e-3) const { return max_ratio > 1.0 + tolerance; }
};

/// Samples pairs uniformly in `box` and reports max |f(x)-f(y)| / ||x-y||.
/// Pairs closer than 1e-9 are skipped.
LipschitzAudit lipschitz_audit(const std::function<Matrix(const Matrix&)>& f, std::size_t n_pairs, const Box& box,
                               std::uint64_t seed);
LipschitzAudit lipschitz_audit(const PotentialNet& f, std::size_t n_pairs, const Box& box, std::uint64_t seed);

}  // namespace w1ot
