// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "w1ot/lipschitz_net.hpp"
#include "w1ot/stepsize_gan.hpp"

namespace w1ot::testing {

using ad::Graph;
using ad::Tensor;

Matrix randn(Index rows, Index cols, Rng& rng, double stddev) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal(0.0, stddev);
  return m;
}

Matrix uniform(Index rows, Index cols, Rng& rng, double lo, double hi) {
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

Matrix tie_free(Index rows, Index cols, Rng& rng) {
  const std::vector<std::size_t> perm = rng.permutation(static_cast<std::size_t>(rows * cols));
  Matrix m(rows, cols);
  const double step = 4.0 / static_cast<double>(rows * cols);
  for (Index k = 0; k < rows * cols; ++k) {
    m(k / cols, k % cols) = -2.0 + step * static_cast<double>(perm[static_cast<std::size_t>(k)]) + 0.1 * step * rng.uniform();
  }
  return m;
}

namespace {

// Random linear functional <C, y> so every output entry feeds the scalar.
Tensor contract(Graph& g, const Tensor& y, Rng& rng) {
  return ad::sum(ad::hadamard(g.constant(randn(y.rows(), y.cols(), rng)), y));
}

Matrix away_from_zero(Index rows, Index cols, Rng& rng, double lo, double hi) {
  Matrix m = uniform(rows, cols, rng, lo, hi);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      if (rng.uniform() < 0.5) m(i, j) = -m(i, j);
  return m;
}

Matrix well_conditioned(Index n, Rng& rng) {
  return Matrix::Identity(n, n) * 3.0 + randn(n, n, rng, 0.5);
}

// Scaled to spectral norm 0.9 so Björck converges without a prescale.
Matrix bjorck_ready(Index rows, Index cols, Rng& rng) {
  Matrix m = randn(rows, cols, rng);
  const double sigma = Eigen::JacobiSVD<Matrix>(m).singularValues()(0);
  return m * (0.9 / sigma);
}

PotentialNetConfig small_net(OrthoMethod method) {
  PotentialNetConfig cfg;
  cfg.input_dim = 2;
  cfg.hidden = {8, 8};
  cfg.group_size = 2;
  cfg.method = method;
  return cfg;
}

std::vector<GradCase> build_cases() {
  std::vector<GradCase> c;
  auto unary = [&](std::string name, std::function<Matrix(Rng&)> in, std::function<Tensor(const Tensor&)> op) {
    c.push_back({std::move(name), std::move(in),
                 [op](Graph& g, const Tensor& x, Rng& r) { return contract(g, op(x), r); }});
  };
  auto r34 = [](Rng& r) { return randn(3, 4, r); };

  c.push_back({"matmul_lhs", r34, [](Graph& g, const Tensor& x, Rng& r) {
                 return contract(g, ad::matmul(x, g.constant(randn(4, 2, r))), r);
               }});
  c.push_back({"matmul_rhs", [](Rng& r) { return randn(4, 2, r); }, [](Graph& g, const Tensor& x, Rng& r) {
                 return contract(g, ad::matmul(g.constant(randn(3, 4, r)), x), r);
               }});
  unary("transpose", r34, [](const Tensor& x) { return ad::transpose(x); });
  unary("mat_inverse", [](Rng& r) { return well_conditioned(4, r); }, [](const Tensor& x) { return ad::mat_inverse(x); });
  c.push_back({"add", r34, [](Graph& g, const Tensor& x, Rng& r) {
                 return contract(g, ad::add(x, g.constant(randn(3, 4, r))), r);
               }});
  c.push_back({"add_bias", [](Rng& r) { return randn(1, 4, r); }, [](Graph& g, const Tensor& x, Rng& r) {
                 return contract(g, ad::add(g.constant(randn(3, 4, r)), x), r);
               }});
  c.push_back({"sub", r34, [](Graph& g, const Tensor& x, Rng& r) {
                 return contract(g, ad::sub(g.constant(randn(3, 4, r)), x), r);
               }});
  c.push_back({"sub_bias", [](Rng& r) { return randn(1, 4, r); }, [](Graph& g, const Tensor& x, Rng& r) {
                 return contract(g, ad::sub(g.constant(randn(3, 4, r)), x), r);
               }});
  unary("scale", r34, [](const Tensor& x) { return ad::scale(x, -1.7); });
  unary("add_scalar", r34, [](const Tensor& x) { return ad::add_scalar(x, 0.3); });
  c.push_back({"hadamard", r34, [](Graph& g, const Tensor& x, Rng& r) {
                 return contract(g, ad::hadamard(x, g.constant(randn(3, 4, r))), r);
               }});
  c.push_back({"hadamard_self", r34, [](Graph& g, const Tensor& x, Rng& r) {
                 return contract(g, ad::hadamard(x, x), r);
               }});
  unary("neg", r34, [](const Tensor& x) { return ad::neg(x); });
  c.push_back({"sum", r34, [](Graph&, const Tensor& x, Rng&) { return ad::sum(x); }});
  c.push_back({"mean", r34, [](Graph& g, const Tensor& x, Rng& r) { return ad::scale(ad::mean(ad::hadamard(x, g.constant(randn(3, 4, r)))), 2.0); }});
  unary("sigmoid", [](Rng& r) { return randn(3, 4, r, 2.0); }, [](const Tensor& x) { return ad::sigmoid(x); });
  unary("softplus", [](Rng& r) { return randn(3, 4, r, 2.0); }, [](const Tensor& x) { return ad::softplus(x); });
  unary("relu", [](Rng& r) { return away_from_zero(3, 4, r, 0.1, 2.0); }, [](const Tensor& x) { return ad::relu(x); });
  unary("log", [](Rng& r) { return uniform(3, 4, r, 0.5, 2.0); }, [](const Tensor& x) { return ad::log(x); });
  unary("reciprocal", [](Rng& r) { return away_from_zero(3, 4, r, 0.5, 2.0); },
        [](const Tensor& x) { return ad::reciprocal(x); });
  unary("row_norm", r34, [](const Tensor& x) { return ad::row_norm(x); });
  c.push_back({"scale_rows_matrix", r34, [](Graph& g, const Tensor& x, Rng& r) {
                 return contract(g, ad::scale_rows(x, g.constant(randn(3, 1, r))), r);
               }});
  c.push_back({"scale_rows_factor", [](Rng& r) { return randn(3, 1, r); }, [](Graph& g, const Tensor& x, Rng& r) {
                 return contract(g, ad::scale_rows(g.constant(randn(3, 4, r)), x), r);
               }});
  unary("groupsort", [](Rng& r) { return tie_free(3, 8, r); }, [](const Tensor& x) { return ad::groupsort(x, 4); });
  unary("slice", r34, [](const Tensor& x) { return ad::slice(x, 1, 1, 2, 2); });
  unary("pad", r34, [](const Tensor& x) { return ad::pad(x, 5, 6); });
  c.push_back({"hconcat", r34, [](Graph& g, const Tensor& x, Rng& r) {
                 return contract(g, ad::hconcat(g.constant(randn(3, 2, r)), x), r);
               }});
  c.push_back({"vconcat", r34, [](Graph& g, const Tensor& x, Rng& r) {
                 return contract(g, ad::vconcat(x, g.constant(randn(2, 4, r))), r);
               }});

  // The diagonal of the leading square block cancels in the skew part, so
  // its true gradient is zero and the relative metric would compare
  // rounding noise. A linear term in the raw weight keeps every coordinate
  // well scaled.
  auto cayley_case = [](Graph& g, const Tensor& x, Rng& r) {
    const Tensor lin = ad::sum(ad::hadamard(g.constant(randn(x.rows(), x.cols(), r)), x));
    return ad::add(contract(g, cayley_orthonormalize(x), r), lin);
  };
  c.push_back({"cayley_square", [](Rng& r) { return randn(4, 4, r, 0.5); }, cayley_case});
  c.push_back({"cayley_wide", [](Rng& r) { return randn(2, 8, r, 0.5); }, cayley_case});
  c.push_back({"cayley_tall", [](Rng& r) { return randn(8, 3, r, 0.5); }, cayley_case});
  unary("bjorck", [](Rng& r) { return bjorck_ready(3, 5, r); },
        [](const Tensor& x) { return bjorck_orthonormalize(x, 20, 0.5); });

  auto potential_input = [](OrthoMethod method) {
    return [method](Graph& g, const Tensor& x, Rng& r) {
      const PotentialNet net(small_net(method), r.index(1u << 30));
      return contract(g, net.forward(g, x), r);
    };
  };
  c.push_back({"potential_cayley_input", [](Rng& r) { return randn(5, 2, r); }, potential_input(OrthoMethod::cayley)});
  c.push_back({"potential_bjorck_input", [](Rng& r) { return randn(5, 2, r); }, potential_input(OrthoMethod::bjorck)});
  c.push_back({"potential_default_input", [](Rng& r) { return randn(3, 2, r); }, [](Graph& g, const Tensor& x, Rng& r) {
                 const PotentialNet net(PotentialNetConfig{}, r.index(1u << 30));
                 return contract(g, net.forward(g, x), r);
               }});
  // Raw weight of the middle layer as the variable: exercises the
  // orthonormalization backward inside a full GroupSort forward.
  c.push_back({"potential_cayley_weight", [](Rng& r) { return randn(8, 8, r, 0.3); },
               [](Graph& g, const Tensor& x, Rng& r) {
                 PotentialNet net(small_net(OrthoMethod::cayley), r.index(1u << 30));
                 const Matrix input = randn(6, 2, r);
                 auto& layers = net.layers();
                 Tensor h = layers[0].forward(g, g.constant(input));
                 h = ad::groupsort(h, 2);
                 h = ad::add(ad::matmul(h, ad::transpose(cayley_orthonormalize(x))), g.constant(layers[1].bias.value));
                 h = ad::groupsort(h, 2);
                 return contract(g, layers[2].forward(g, h), r);
               }});
  c.push_back({"stepsize_input", [](Rng& r) { return randn(4, 3, r); }, [](Graph& g, const Tensor& x, Rng& r) {
                 const StepSizeNet net(3, {16, 16}, r.index(1u << 30));
                 return contract(g, net.forward(g, x), r);
               }});
  return c;
}

}  // namespace

const std::vector<GradCase>& grad_cases() {
  static const std::vector<GradCase> cases = build_cases();
  return cases;
}

double run_grad_case(const GradCase& c, std::uint64_t seed) {
  Rng input_rng(mix_seed(seed, 1));
  const Matrix x = c.input(input_rng);
  const std::uint64_t const_seed = mix_seed(seed, 2);
  return ad::grad_check(
      [&](Graph& g, const Tensor& t) {
        Rng r(const_seed);
        return c.f(g, t, r);
      },
      x);
}

double brute_force_w1(const Matrix& x, const Matrix& y) {
  std::vector<Index> perm(static_cast<std::size_t>(x.rows()));
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (Index i = 0; i < x.rows(); ++i) cost += (x.row(i) - y.row(perm[static_cast<std::size_t>(i)])).norm();
    best = std::min(best, cost);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best / static_cast<double>(x.rows());
}

}  // namespace w1ot::testing
