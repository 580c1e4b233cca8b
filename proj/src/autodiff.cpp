// SPDX-License-Identifier: Apache-2.0
#include "w1ot/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "w1ot/error.hpp"

namespace w1ot::ad {

std::string shape_string(const Matrix& m) {
  std::ostringstream os;
  os << "(" << m.rows() << "x" << m.cols() << ")";
  return os.str();
}

namespace {

void require_same_graph(const Tensor& a, const Tensor& b, std::string_view op) {
  if (!a.valid() || !b.valid() || &a.graph() != &b.graph()) {
    throw UsageError(std::string(op) + ": operands belong to different graphs");
  }
}

[[noreturn]] void shape_mismatch(std::string_view op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " + shape_string(b));
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

// LU with partial pivoting, returning the inverse.
Matrix lu_inverse(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw ShapeError("mat_inverse: matrix must be square, got " + shape_string(a));
  }
  const Index n = a.rows();
  Matrix lu = a;
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  for (Index k = 0; k < n; ++k) {
    Index pivot = k;
    double best = std::abs(lu(k, k));
    for (Index i = k + 1; i < n; ++i) {
      const double v = std::abs(lu(i, k));
      if (v > best) {
        best = v;
        pivot = i;
      }
    }
    if (!(best > kPivotFloor)) {
      std::ostringstream os;
      os << "mat_inverse: singular matrix, pivot " << k << " has magnitude " << best;
      throw NumericalError(os.str());
    }
    if (pivot != k) {
      lu.row(k).swap(lu.row(pivot));
      std::swap(perm[static_cast<std::size_t>(k)], perm[static_cast<std::size_t>(pivot)]);
    }
    const double inv_pivot = 1.0 / lu(k, k);
    for (Index i = k + 1; i < n; ++i) {
      const double factor = lu(i, k) * inv_pivot;
      lu(i, k) = factor;
      if (factor != 0.0) {
        lu.row(i).tail(n - k - 1) -= factor * lu.row(k).tail(n - k - 1);
      }
    }
  }
  // Solve L U X = P I one right-hand side block at a time.
  Matrix x = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) x(i, perm[static_cast<std::size_t>(i)]) = 1.0;
  for (Index i = 0; i < n; ++i) {
    for (Index k = 0; k < i; ++k) {
      const double l = lu(i, k);
      if (l != 0.0) x.row(i) -= l * x.row(k);
    }
  }
  for (Index i = n - 1; i >= 0; --i) {
    for (Index k = i + 1; k < n; ++k) {
      const double u = lu(i, k);
      if (u != 0.0) x.row(i) -= u * x.row(k);
    }
    x.row(i) /= lu(i, i);
  }
  return x;
}

// Output column j of each row comes from input column perm(i, j).
struct SortResult {
  Matrix values;
  Eigen::Matrix<Index, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> perm;
};

SortResult groupsort_impl(const Matrix& a, Index group_size) {
  if (group_size <= 0) throw ConfigError("groupsort: group_size must be positive");
  if (a.cols() % group_size != 0) {
    std::ostringstream os;
    os << "groupsort: width " << a.cols() << " is not divisible by group_size " << group_size;
    throw ConfigError(os.str());
  }
  SortResult r{Matrix(a.rows(), a.cols()), {}};
  r.perm.resize(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    const double* in = a.data() + i * a.cols();
    double* out = r.values.data() + i * a.cols();
    Index* perm = r.perm.data() + i * a.cols();
    for (Index g = 0; g < a.cols(); g += group_size) {
      // Insertion sort: stable, and groups are small.
      for (Index j = 0; j < group_size; ++j) {
        const double v = in[g + j];
        Index k = j;
        while (k > 0 && out[g + k - 1] > v) {
          out[g + k] = out[g + k - 1];
          perm[g + k] = perm[g + k - 1];
          --k;
        }
        out[g + k] = v;
        perm[g + k] = g + j;
      }
    }
  }
  return r;
}

template <typename F>
Tensor unary(const Tensor& a, std::string_view op, Matrix value, F&& backward) {
  return a.graph().record(op, {a.id()}, std::move(value), std::forward<F>(backward));
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

const Matrix& Tensor::value() const { return graph_->value(id_); }
const Matrix& Tensor::adjoint() const { return graph_->adjoint(id_); }
bool Tensor::has_adjoint() const { return graph_->has_adjoint(id_); }
bool Tensor::requires_grad() const { return graph_->requires_grad(id_); }

// ---- Graph ----------------------------------------------------------------

Tensor Graph::push_leaf(Matrix value, bool requires_grad, Parameter* param) {
  Node n;
  n.op = "leaf";
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.leaf = true;
  n.param = param;
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

Tensor Graph::constant(Matrix value) { return push_leaf(std::move(value), false, nullptr); }
Tensor Graph::variable(Matrix value) { return push_leaf(std::move(value), true, nullptr); }
Tensor Graph::parameter(Parameter& p) { return push_leaf(p.value, true, &p); }

Tensor Graph::record(std::string_view op, std::vector<std::size_t> inputs, Matrix value, BackwardFn backward) {
  if (backward_done_) throw UsageError("graph: cannot record after backward; reset first");
  Node n;
  n.op = op;
  n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
  n.inputs = std::move(inputs);
  n.value = std::move(value);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.size() - 1);
}

const Matrix& Graph::adjoint(std::size_t id) const {
  if (!nodes_[id].has_adjoint) throw UsageError("graph: node has no adjoint (not a leaf reached by backward)");
  return nodes_[id].adjoint;
}

void Graph::backward(const Tensor& loss) {
  if (backward_done_) throw UsageError("graph: backward called twice without reset");
  if (&loss.graph() != this) throw UsageError("graph: loss belongs to a different graph");
  const Node& root = nodes_[loss.id()];
  if (root.value.rows() != 1 || root.value.cols() != 1) {
    throw UsageError("backward: loss must be 1x1, got " + shape_string(root.value));
  }
  backward_done_ = true;
  backward_visits_ = 0;
  for (Node& n : nodes_) n.has_adjoint = false;
  nodes_[loss.id()].adjoint = Matrix::Ones(1, 1);
  nodes_[loss.id()].has_adjoint = true;

  std::vector<Matrix*> input_adjoints;
  for (std::size_t k = nodes_.size(); k-- > 0;) {
    ++backward_visits_;
    Node& n = nodes_[k];
    if (!n.has_adjoint || !n.requires_grad || n.leaf || !n.backward) continue;
    input_adjoints.clear();
    for (std::size_t in : n.inputs) {
      Node& src = nodes_[in];
      if (!src.requires_grad) {
        input_adjoints.push_back(nullptr);
        continue;
      }
      if (!src.has_adjoint) {
        src.adjoint = Matrix::Zero(src.value.rows(), src.value.cols());
        src.has_adjoint = true;
      }
      input_adjoints.push_back(&src.adjoint);
    }
    n.backward(*this, n.value, n.adjoint, input_adjoints);
  }

  for (Node& n : nodes_) {
    if (n.leaf) {
      if (n.param != nullptr && n.has_adjoint) {
        if (n.param->grad.rows() != n.adjoint.rows() || n.param->grad.cols() != n.adjoint.cols()) {
          n.param->grad = Matrix::Zero(n.adjoint.rows(), n.adjoint.cols());
        }
        n.param->grad += n.adjoint;
      }
    } else {
      n.adjoint.resize(0, 0);
      n.has_adjoint = false;
    }
  }
}

void Graph::reset() {
  nodes_.clear();
  backward_done_ = false;
  backward_visits_ = 0;
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_graph(a, b, "matmul");
  if (a.cols() != b.rows()) shape_mismatch("matmul", a.value(), b.value());
  Matrix v = a.value() * b.value();
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("matmul", {ia, ib}, std::move(v),
                          [ia, ib](const Graph& g, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                            if (in[0]) in[0]->noalias() += grad * g.value(ib).transpose();
                            if (in[1]) in[1]->noalias() += g.value(ia).transpose() * grad;
                          });
}

Tensor transpose(const Tensor& a) {
  return unary(a, "transpose", a.value().transpose(),
               [](const Graph&, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                 *in[0] += grad.transpose();
               });
}

Tensor mat_inverse(const Tensor& a) {
  return unary(a, "mat_inverse", lu_inverse(a.value()),
               [](const Graph&, const Matrix& inv, const Matrix& grad, std::span<Matrix* const> in) {
                 // d(A^-1) = -A^-1 dA A^-1  =>  dL/dA = -A^-T G A^-T
                 const Matrix tmp = inv.transpose() * grad;
                 in[0]->noalias() -= tmp * inv.transpose();
               });
}

Matrix inverse_values(const Matrix& a) { return lu_inverse(a); }

// ---- elementwise ----------------------------------------------------------

namespace {

enum class Broadcast { none, row };

Broadcast broadcast_kind(std::string_view op, const Matrix& a, const Matrix& b) {
  if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::none;
  if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
  shape_mismatch(op, a, b);
}

Tensor add_impl(const Tensor& a, const Tensor& b, double sign, std::string_view op) {
  require_same_graph(a, b, op);
  const Broadcast kind = broadcast_kind(op, a.value(), b.value());
  Matrix v;
  if (kind == Broadcast::none) {
    v = a.value() + sign * b.value();
  } else {
    v = a.value();
    v.rowwise() += sign * b.value().row(0);
  }
  return a.graph().record(op, {a.id(), b.id()}, std::move(v),
                          [kind, sign](const Graph&, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                            if (in[0]) *in[0] += grad;
                            if (in[1]) {
                              if (kind == Broadcast::none) {
                                *in[1] += sign * grad;
                              } else {
                                *in[1] += sign * grad.colwise().sum();
                              }
                            }
                          });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return add_impl(a, b, 1.0, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return add_impl(a, b, -1.0, "sub"); }

Tensor scale(const Tensor& a, double factor) {
  return unary(a, "scale", a.value() * factor,
               [factor](const Graph&, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                 *in[0] += factor * grad;
               });
}

Tensor add_scalar(const Tensor& a, double offset) {
  return unary(a, "add_scalar", (a.value().array() + offset).matrix(),
               [](const Graph&, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) { *in[0] += grad; });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_graph(a, b, "hadamard");
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_mismatch("hadamard", a.value(), b.value());
  Matrix v = a.value().cwiseProduct(b.value());
  const std::size_t ia = a.id(), ib = b.id();
  return a.graph().record("hadamard", {ia, ib}, std::move(v),
                          [ia, ib](const Graph& g, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                            if (in[0]) *in[0] += grad.cwiseProduct(g.value(ib));
                            if (in[1]) *in[1] += grad.cwiseProduct(g.value(ia));
                          });
}

Tensor neg(const Tensor& a) {
  return unary(a, "neg", -a.value(),
               [](const Graph&, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) { *in[0] -= grad; });
}

Tensor sum(const Tensor& a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return unary(a, "sum", std::move(v),
               [](const Graph&, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                 in[0]->array() += grad(0, 0);
               });
}

Tensor mean(const Tensor& a) {
  const Index n = a.value().size();
  if (n == 0) throw UsageError("mean: empty tensor");
  Matrix v(1, 1);
  v(0, 0) = a.value().sum() / static_cast<double>(n);
  return unary(a, "mean", std::move(v),
               [n](const Graph&, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                 in[0]->array() += grad(0, 0) / static_cast<double>(n);
               });
}

Tensor sigmoid(const Tensor& a) {
  Matrix v = a.value().unaryExpr([](double x) { return stable_sigmoid(x); });
  return unary(a, "sigmoid", std::move(v),
               [](const Graph&, const Matrix& s, const Matrix& grad, std::span<Matrix* const> in) {
                 in[0]->array() += grad.array() * s.array() * (1.0 - s.array());
               });
}

Tensor softplus(const Tensor& a) {
  Matrix v = a.value().unaryExpr([](double x) { return stable_softplus(x); });
  const std::size_t ia = a.id();
  return unary(a, "softplus", std::move(v),
               [ia](const Graph& g, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                 in[0]->array() +=
                     grad.array() * g.value(ia).unaryExpr([](double x) { return stable_sigmoid(x); }).array();
               });
}

Tensor relu(const Tensor& a) {
  Matrix v = a.value().cwiseMax(0.0);
  const std::size_t ia = a.id();
  return unary(a, "relu", std::move(v),
               [ia](const Graph& g, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                 in[0]->array() += (g.value(ia).array() > 0.0).select(grad.array(), 0.0);
               });
}

Tensor log(const Tensor& a) {
  Matrix v = a.value().unaryExpr([](double x) { return std::log(std::max(x, kLogFloor)); });
  const std::size_t ia = a.id();
  return unary(a, "log", std::move(v),
               [ia](const Graph& g, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                 const auto& x = g.value(ia).array();
                 in[0]->array() += (x > kLogFloor).select(grad.array() / x, 0.0);
               });
}

Tensor reciprocal(const Tensor& a) {
  Matrix v = a.value().cwiseInverse();
  return unary(a, "reciprocal", std::move(v),
               [](const Graph&, const Matrix& r, const Matrix& grad, std::span<Matrix* const> in) {
                 in[0]->array() -= grad.array() * r.array().square();
               });
}

Tensor row_norm(const Tensor& a) {
  Matrix v = a.value().rowwise().norm();
  const std::size_t ia = a.id();
  return unary(a, "row_norm", std::move(v),
               [ia](const Graph& g, const Matrix& norms, const Matrix& grad, std::span<Matrix* const> in) {
                 const Matrix& x = g.value(ia);
                 for (Index i = 0; i < x.rows(); ++i) {
                   const double n = norms(i, 0);
                   if (n > 0.0) in[0]->row(i) += (grad(i, 0) / n) * x.row(i);
                 }
               });
}

Tensor scale_rows(const Tensor& a, const Tensor& s) {
  require_same_graph(a, s, "scale_rows");
  if (s.cols() != 1 || s.rows() != a.rows()) shape_mismatch("scale_rows", a.value(), s.value());
  Matrix v = a.value().array().colwise() * s.value().col(0).array();
  const std::size_t ia = a.id(), is = s.id();
  return a.graph().record("scale_rows", {ia, is}, std::move(v),
                          [ia, is](const Graph& g, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                            if (in[0]) in[0]->array() += grad.array().colwise() * g.value(is).col(0).array();
                            if (in[1]) *in[1] += grad.cwiseProduct(g.value(ia)).rowwise().sum();
                          });
}

Tensor groupsort(const Tensor& a, Index group_size) {
  SortResult r = groupsort_impl(a.value(), group_size);
  return unary(a, "groupsort", std::move(r.values),
               [perm = std::move(r.perm)](const Graph&, const Matrix&, const Matrix& grad,
                                          std::span<Matrix* const> in) {
                 Matrix& d = *in[0];
                 for (Index i = 0; i < grad.rows(); ++i) {
                   for (Index j = 0; j < grad.cols(); ++j) d(i, perm(i, j)) += grad(i, j);
                 }
               });
}

Matrix groupsort_values(const Matrix& a, Index group_size) { return groupsort_impl(a, group_size).values; }

// ---- structural -----------------------------------------------------------

Tensor slice(const Tensor& a, Index row, Index col, Index rows, Index cols) {
  if (row < 0 || col < 0 || rows < 0 || cols < 0 || row + rows > a.rows() || col + cols > a.cols()) {
    std::ostringstream os;
    os << "slice: block (" << row << "," << col << ")+(" << rows << "x" << cols << ") outside "
       << shape_string(a.value());
    throw ShapeError(os.str());
  }
  Matrix v = a.value().block(row, col, rows, cols);
  return unary(a, "slice", std::move(v),
               [row, col, rows, cols](const Graph&, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                 in[0]->block(row, col, rows, cols) += grad;
               });
}

Tensor pad(const Tensor& a, Index rows, Index cols) {
  if (rows < a.rows() || cols < a.cols()) {
    throw ShapeError("pad: target (" + std::to_string(rows) + "x" + std::to_string(cols) + ") smaller than " +
                     shape_string(a.value()));
  }
  Matrix v = Matrix::Zero(rows, cols);
  v.topLeftCorner(a.rows(), a.cols()) = a.value();
  const Index r = a.rows(), c = a.cols();
  return unary(a, "pad", std::move(v),
               [r, c](const Graph&, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                 *in[0] += grad.topLeftCorner(r, c);
               });
}

Tensor hconcat(const Tensor& a, const Tensor& b) {
  require_same_graph(a, b, "hconcat");
  if (a.rows() != b.rows()) shape_mismatch("hconcat", a.value(), b.value());
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  const Index ca = a.cols(), cb = b.cols();
  return a.graph().record("hconcat", {a.id(), b.id()}, std::move(v),
                          [ca, cb](const Graph&, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                            if (in[0]) *in[0] += grad.leftCols(ca);
                            if (in[1]) *in[1] += grad.rightCols(cb);
                          });
}

Tensor vconcat(const Tensor& a, const Tensor& b) {
  require_same_graph(a, b, "vconcat");
  if (a.cols() != b.cols()) shape_mismatch("vconcat", a.value(), b.value());
  Matrix v(a.rows() + b.rows(), a.cols());
  v << a.value(), b.value();
  const Index ra = a.rows(), rb = b.rows();
  return a.graph().record("vconcat", {a.id(), b.id()}, std::move(v),
                          [ra, rb](const Graph&, const Matrix&, const Matrix& grad, std::span<Matrix* const> in) {
                            if (in[0]) *in[0] += grad.topRows(ra);
                            if (in[1]) *in[1] += grad.bottomRows(rb);
                          });
}

// ---- gradient check -------------------------------------------------------

double grad_check(const ScalarFn& f, const Matrix& x, double eps) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");
  Graph g;
  Tensor xv = g.variable(x);
  Tensor loss = f(g, xv);
  g.backward(loss);
  const Matrix analytic = xv.adjoint();

  auto eval = [&](const Matrix& at) {
    Graph h;
    return f(h, h.constant(at)).value()(0, 0);
  };
  double worst = 0.0;
  Matrix probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + eps;
    const double up = eval(probe);
    probe.data()[i] = orig - eps;
    const double down = eval(probe);
    probe.data()[i] = orig;
    const double central = (up - down) / (2.0 * eps);
    const double a = analytic.data()[i];
    worst = std::max(worst, std::abs(a - central) / (std::abs(a) + std::abs(central) + 1e-12));
  }
  return worst;
}

}  // namespace w1ot::ad
