// SPDX-License-Identifier: Apache-2.0
#include "w1ot/lipschitz_net.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "w1ot/error.hpp"
#include "w1ot/rng.hpp"

namespace w1ot {

using ad::Graph;
using ad::Tensor;

std::string to_string(OrthoMethod m) { return m == OrthoMethod::bjorck ? "bjorck" : "cayley"; }

OrthoMethod ortho_method_from_string(const std::string& s) {
  if (s == "bjorck") return OrthoMethod::bjorck;
  if (s == "cayley") return OrthoMethod::cayley;
  throw ConfigError("unknown orthonormalization method '" + s + "' (expected bjorck or cayley)");
}

// ---- orthonormalization ----------------------------------------------------

double spectral_norm_estimate(const Matrix& m, int iters) {
  if (m.size() == 0) return 0.0;
  // Fixed pseudo-random start vector: deterministic and almost surely not
  // orthogonal to the top right-singular vector.
  Rng rng(0x5eed);
  Eigen::VectorXd v(m.cols());
  for (Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd u = m * v;
    sigma = u.norm();
    if (!(sigma > 0.0)) return 0.0;
    v = m.transpose() * u;
    const double nv = v.norm();
    if (!(nv > 0.0)) return 0.0;
    v /= nv;
  }
  return (m * v).norm();
}

Tensor spectral_prescale(const Tensor& m) {
  const double sigma = spectral_norm_estimate(m.value(), 20);
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    std::ostringstream os;
    os << "spectral_prescale: spectral norm estimate " << sigma << " is not positive for "
       << ad::shape_string(m.value());
    throw NumericalError(os.str());
  }
  return ad::scale(m, 1.0 / (sigma + 1e-6));
}

Tensor bjorck_orthonormalize(const Tensor& m, int iters, double beta) {
  if (iters < 1) throw ConfigError("bjorck_orthonormalize: iters must be >= 1");
  Tensor w = m;
  const bool wide = m.rows() <= m.cols();
  for (int it = 0; it < iters; ++it) {
    const Tensor wt = ad::transpose(w);
    const Tensor cubic = wide ? ad::matmul(ad::matmul(w, wt), w) : ad::matmul(w, ad::matmul(wt, w));
    w = ad::add(w, ad::scale(ad::sub(w, cubic), beta));
  }
  return w;
}

Matrix bjorck_orthonormalize(const Matrix& m, int iters, double beta) {
  Graph g;
  return bjorck_orthonormalize(g.constant(m), iters, beta).value();
}

namespace {

Tensor identity(Graph& g, Index n) { return g.constant(Matrix::Identity(n, n)); }

// Square embedding: Q = (I - A)^-1 (I + A), A = (P - P^T)/2, P = pad(M).
Tensor cayley_dense(const Tensor& m) {
  Graph& g = m.graph();
  const Index n = std::max(m.rows(), m.cols());
  const Tensor p = ad::pad(m, n, n);
  const Tensor a = ad::scale(ad::sub(p, ad::transpose(p)), 0.5);
  const Tensor eye = identity(g, n);
  const Tensor q = ad::matmul(ad::mat_inverse(ad::sub(eye, a)), ad::add(eye, a));
  return ad::slice(q, 0, 0, m.rows(), m.cols());
}

// Wide M (k x n, 2k < n). With E = [I_k; 0], A = U V^T for U = [E, M^T] and
// V^T = [M/2; -E^T/2]. Woodbury gives Q = I + 2 U K V^T, K = (I - V^T U)^-1,
// so the top k rows are [I_k 0] + 2 [I_k, M1^T] K V^T with M1 = M[:, :k].
Tensor cayley_lowrank_wide(const Tensor& m) {
  Graph& g = m.graph();
  const Index k = m.rows();
  const Index n = m.cols();
  const Tensor m1 = ad::slice(m, 0, 0, k, k);
  const Tensor m1t = ad::transpose(m1);
  const Tensor half_m = ad::scale(m, 0.5);

  Matrix et(k, n);
  et.setZero();
  et.leftCols(k).setIdentity();
  const Tensor half_et = g.constant(-0.5 * et);
  const Tensor vt = ad::vconcat(half_m, half_et);

  // V^T U = [[M1/2, M M^T / 2], [-I/2, -M1^T/2]]
  const Tensor top = ad::hconcat(ad::scale(m1, 0.5), ad::scale(ad::matmul(m, ad::transpose(m)), 0.5));
  const Tensor bottom = ad::hconcat(g.constant(-0.5 * Matrix::Identity(k, k)), ad::scale(m1t, -0.5));
  const Tensor vtu = ad::vconcat(top, bottom);
  const Tensor kinv = ad::mat_inverse(ad::sub(identity(g, 2 * k), vtu));

  const Tensor left = ad::hconcat(identity(g, k), m1t);
  const Tensor correction = ad::matmul(ad::matmul(left, kinv), vt);
  return ad::add(g.constant(et), ad::scale(correction, 2.0));
}

}  // namespace

Tensor cayley_orthonormalize(const Tensor& m) {
  const Index k = std::min(m.rows(), m.cols());
  const Index n = std::max(m.rows(), m.cols());
  if (2 * k >= n) return cayley_dense(m);
  if (m.rows() <= m.cols()) return cayley_lowrank_wide(m);
  // Tall case: Cayley of the transposed embedding is Q^T.
  return ad::transpose(cayley_lowrank_wide(ad::transpose(m)));
}

Matrix cayley_orthonormalize(const Matrix& m) {
  Graph g;
  return cayley_orthonormalize(g.constant(m)).value();
}

Matrix cayley_orthonormalize_dense(const Matrix& m) {
  Graph g;
  return cayley_dense(g.constant(m)).value();
}

double orthonormality_defect(const Matrix& w) {
  if (w.rows() <= w.cols()) {
    return (w * w.transpose() - Matrix::Identity(w.rows(), w.rows())).norm();
  }
  return (w.transpose() * w - Matrix::Identity(w.cols(), w.cols())).norm();
}

// ---- layers ----------------------------------------------------------------

namespace {

Tensor orthonormalize(const Tensor& raw, const OrthonormalLayer& layer) {
  if (raw.rows() == 1) {
    return ad::scale_rows(raw, ad::reciprocal(ad::row_norm(raw)));
  }
  if (layer.method == OrthoMethod::cayley) return cayley_orthonormalize(raw);
  return bjorck_orthonormalize(spectral_prescale(raw), layer.bjorck_iters, layer.bjorck_beta);
}

Tensor affine(const Tensor& h, const Tensor& w, const Tensor& b) {
  if (h.cols() != w.cols()) {
    throw ShapeError("layer_forward: input " + ad::shape_string(h.value()) + " does not match weight " +
                     ad::shape_string(w.value()));
  }
  return ad::add(ad::matmul(h, ad::transpose(w)), b);
}

}  // namespace

Tensor OrthonormalLayer::effective_weight(Graph& g, ParamMode mode) {
  if (mode == ParamMode::frozen) return std::as_const(*this).effective_weight(g);
  return orthonormalize(g.parameter(weight), *this);
}

Tensor OrthonormalLayer::effective_weight(Graph& g) const { return orthonormalize(g.constant(weight.value), *this); }

Matrix OrthonormalLayer::effective_weight() const {
  Graph g;
  return orthonormalize(g.constant(weight.value), *this).value();
}

Tensor OrthonormalLayer::forward(Graph& g, const Tensor& h, ParamMode mode) {
  if (mode == ParamMode::frozen) return std::as_const(*this).forward(g, h);
  return affine(h, effective_weight(g, mode), g.parameter(bias));
}

Tensor OrthonormalLayer::forward(Graph& g, const Tensor& h) const {
  return affine(h, effective_weight(g), g.constant(bias.value));
}

// ---- network ---------------------------------------------------------------

void PotentialNetConfig::validate() const {
  if (input_dim < 1) throw ConfigError("network: input_dim must be >= 1");
  if (group_size < 1) throw ConfigError("network: group_size must be >= 1");
  if (bjorck_iters < 1) throw ConfigError("network: bjorck_iters must be >= 1");
  if (!(bjorck_beta > 0.0 && bjorck_beta <= 0.5)) throw ConfigError("network: bjorck_beta must lie in (0, 0.5]");
  for (Index width : hidden) {
    if (width < 1) throw ConfigError("network: hidden widths must be positive");
    if (width % group_size != 0) {
      throw ConfigError("network: hidden width " + std::to_string(width) + " is not divisible by group_size " +
                        std::to_string(group_size));
    }
    if (width == group_size && width > 1) {
      throw ConfigError("network: group_size " + std::to_string(group_size) + " equals hidden width " +
                        std::to_string(width) + "; GroupSort would sort the whole layer and degenerate");
    }
  }
}

PotentialNet::PotentialNet(const PotentialNetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(mix_seed(seed, 11));
  std::vector<Index> dims{cfg_.input_dim};
  dims.insert(dims.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  dims.push_back(1);
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const Index in = dims[l];
    const Index out = dims[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Matrix w(out, in);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    Matrix b(1, out);
    for (Index i = 0; i < b.size(); ++i) b.data()[i] = rng.uniform(-bound, bound);
    OrthonormalLayer layer;
    layer.weight = ad::Parameter("potential." + std::to_string(l) + ".weight", std::move(w));
    layer.bias = ad::Parameter("potential." + std::to_string(l) + ".bias", std::move(b));
    layer.method = cfg_.method;
    layer.bjorck_iters = cfg_.bjorck_iters;
    layer.bjorck_beta = cfg_.bjorck_beta;
    layers_.push_back(std::move(layer));
  }
}

PotentialNet::PotentialNet(const PotentialNetConfig& cfg, std::vector<OrthonormalLayer> layers)
    : cfg_(cfg), layers_(std::move(layers)) {
  cfg_.validate();
  if (layers_.size() != cfg_.hidden.size() + 1) throw ConfigError("potential: layer count does not match config");
  Index expected_in = cfg_.input_dim;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Index expected_out = l < cfg_.hidden.size() ? cfg_.hidden[l] : 1;
    const auto& layer = layers_[l];
    if (layer.in_dim() != expected_in || layer.out_dim() != expected_out || layer.bias.value.rows() != 1 ||
        layer.bias.value.cols() != expected_out) {
      throw ShapeError("potential: layer " + std::to_string(l) + " has shape " +
                       ad::shape_string(layer.weight.value) + " but config expects (" +
                       std::to_string(expected_out) + "x" + std::to_string(expected_in) + ")");
    }
    expected_in = expected_out;
  }
}

std::vector<ad::Parameter*> PotentialNet::parameters() {
  std::vector<ad::Parameter*> out;
  for (auto& layer : layers_) {
    out.push_back(&layer.weight);
    out.push_back(&layer.bias);
  }
  return out;
}

Tensor PotentialNet::forward(Graph& g, const Tensor& x, ParamMode mode) {
  if (mode == ParamMode::frozen) return std::as_const(*this).forward(g, x);
  Tensor h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = layers_[l].forward(g, h, mode);
    if (l + 1 < layers_.size()) h = ad::groupsort(h, cfg_.group_size);
  }
  return h;
}

Tensor PotentialNet::forward(Graph& g, const Tensor& x) const {
  Tensor h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    h = layers_[l].forward(g, h);
    if (l + 1 < layers_.size()) h = ad::groupsort(h, cfg_.group_size);
  }
  return h;
}

Matrix PotentialNet::evaluate_with(const std::vector<Matrix>& weights, const Matrix& x) const {
  if (weights.size() != layers_.size()) throw ShapeError("potential: weight list length mismatch");
  Matrix h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    if (h.cols() != weights[l].cols()) {
      throw ShapeError("potential: input " + ad::shape_string(h) + " does not match weight " +
                       ad::shape_string(weights[l]));
    }
    Matrix z = h * weights[l].transpose();
    z.rowwise() += layers_[l].bias.value.row(0);
    h = l + 1 < layers_.size() ? ad::groupsort_values(z, cfg_.group_size) : std::move(z);
  }
  return h;
}

std::vector<Matrix> PotentialNet::effective_weights() const {
  std::vector<Matrix> out;
  out.reserve(layers_.size());
  for (const auto& layer : layers_) out.push_back(layer.effective_weight());
  return out;
}

Matrix PotentialNet::evaluate(const Matrix& x) const { return evaluate_with(effective_weights(), x); }

Matrix PotentialNet::input_gradient(const Matrix& x) const {
  Graph g;
  const Tensor xv = g.variable(x);
  const Tensor out = forward(g, xv);
  g.backward(ad::sum(out));
  return xv.adjoint();
}

// ---- audit -----------------------------------------------------------------

Box Box::bounding(const Matrix& x, double margin) {
  if (x.rows() == 0) throw UsageError("Box::bounding: empty matrix");
  Box b{x.colwise().minCoeff(), x.colwise().maxCoeff()};
  b.lower.array() -= margin;
  b.upper.array() += margin;
  return b;
}

LipschitzAudit lipschitz_audit(const std::function<Matrix(const Matrix&)>& f, std::size_t n_pairs, const Box& box,
                               std::uint64_t seed) {
  if (n_pairs < 1) throw UsageError("lipschitz_audit: n_pairs must be >= 1");
  const Index d = box.lower.cols();
  const Index n = static_cast<Index>(n_pairs);
  Rng rng(mix_seed(seed, 21));
  Matrix pts(2 * n, d);
  for (Index i = 0; i < 2 * n; ++i) {
    for (Index j = 0; j < d; ++j) pts(i, j) = rng.uniform(box.lower(0, j), box.upper(0, j));
  }
  const Matrix values = f(pts);
  LipschitzAudit audit;
  for (Index p = 0; p < n; ++p) {
    const double dist = (pts.row(2 * p) - pts.row(2 * p + 1)).norm();
    if (dist < 1e-9) continue;
    const double ratio = std::abs(values(2 * p, 0) - values(2 * p + 1, 0)) / dist;
    audit.max_ratio = std::max(audit.max_ratio, ratio);
    ++audit.pairs_used;
  }
  return audit;
}

LipschitzAudit lipschitz_audit(const PotentialNet& f, std::size_t n_pairs, const Box& box, std::uint64_t seed) {
  const std::vector<Matrix> weights = f.effective_weights();
  return lipschitz_audit([&](const Matrix& x) { return f.evaluate_with(weights, x); }, n_pairs, box, seed);
}

}  // namespace w1ot
