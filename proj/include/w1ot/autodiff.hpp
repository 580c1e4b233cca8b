// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace w1ot::ad {

/// Dense row-major matrix of doubles; the value type of every tensor.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

/// Floor applied to the argument of `log`.
inline constexpr double kLogFloor = 1e-12;
/// Smallest pivot magnitude accepted by `mat_inverse`.
inline constexpr double kPivotFloor = 1e-12;

/// Trainable leaf living outside any graph. Gradients from a backward pass
/// are accumulated into `grad`.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v)
      : name(std::move(n)), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Graph;

/// Handle to a node of a Graph. Cheap to copy; valid while the graph lives
/// and has not been reset.
class Tensor {
 public:
  Tensor() = default;

  Graph& graph() const { return *graph_; }
  std::size_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

  const Matrix& value() const;
  /// Adjoint after backward. Only leaves keep theirs.
  const Matrix& adjoint() const;
  bool has_adjoint() const;
  bool requires_grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }

 private:
  friend class Graph;
  Tensor(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

/// Tape of operations. Nodes are appended in construction order, which is a
/// topological order; backward walks the tape in reverse.
class Graph {
 public:
  /// Propagates the output adjoint to the input adjoints. Entries of
  /// `input_adjoints` are null for inputs that do not require gradients.
  using BackwardFn = std::function<void(const Graph&, const Matrix& out_value, const Matrix& out_adjoint,
                                        std::span<Matrix* const> input_adjoints)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor constant(Matrix value);
  Tensor variable(Matrix value);
  /// Leaf bound to `p`; after backward its adjoint is added to `p.grad`.
  Tensor parameter(Parameter& p);

  /// Appends an operation node. `value` must already be computed.
  Tensor record(std::string_view op, std::vector<std::size_t> inputs, Matrix value, BackwardFn backward);

  /// Reverse sweep from a 1x1 loss. May be called once per construction.
  void backward(const Tensor& loss);

  /// Drops every node; handles become dangling.
  void reset();

  std::size_t size() const { return nodes_.size(); }
  /// Nodes processed by the last backward call.
  std::size_t backward_visits() const { return backward_visits_; }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& adjoint(std::size_t id) const;
  bool has_adjoint(std::size_t id) const { return nodes_[id].has_adjoint; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::string_view op(std::size_t id) const { return nodes_[id].op; }

 private:
  struct Node {
    std::string_view op;
    std::vector<std::size_t> inputs;
    Matrix value;
    Matrix adjoint;
    bool has_adjoint = false;
    bool requires_grad = false;
    bool leaf = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  Tensor push_leaf(Matrix value, bool requires_grad, Parameter* param);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
  std::size_t backward_visits_ = 0;
};

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// LU with partial pivoting; throws NumericalError on a pivot below kPivotFloor.
Tensor mat_inverse(const Tensor& a);

// ---- elementwise and reductions --------------------------------------------

/// a + b. `b` may be 1 x cols(a) and is then broadcast along rows.
Tensor add(const Tensor& a, const Tensor& b);
/// a - b with the same broadcasting rule as add.
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor relu(const Tensor& a);
/// log(max(a, kLogFloor)); zero gradient below the floor.
Tensor log(const Tensor& a);
Tensor reciprocal(const Tensor& a);
/// Euclidean norm of each row: m x n -> m x 1.
Tensor row_norm(const Tensor& a);
/// Multiplies row i of `a` (m x n) by s(i, 0) (s is m x 1).
Tensor scale_rows(const Tensor& a, const Tensor& s);

/// Sorts contiguous groups of `group_size` entries of every row ascending.
/// Ties keep their original order.
Tensor groupsort(const Tensor& a, Index group_size);

// ---- structural -----------------------------------------------------------

Tensor slice(const Tensor& a, Index row, Index col, Index rows, Index cols);
/// Embeds `a` into the top-left corner of a zero rows x cols matrix.
Tensor pad(const Tensor& a, Index rows, Index cols);
Tensor hconcat(const Tensor& a, const Tensor& b);
Tensor vconcat(const Tensor& a, const Tensor& b);

/// Non-differentiable helpers on plain matrices.
Matrix groupsort_values(const Matrix& a, Index group_size);
Matrix inverse_values(const Matrix& a);

/// Scalar function of one tensor, built on the graph it is handed.
using ScalarFn = std::function<Tensor(Graph&, const Tensor&)>;

/// Max over coordinates of |analytic - central| / (|analytic| + |central| + 1e-12).
/// `eps` must lie in [1e-7, 1e-3].
double grad_check(const ScalarFn& f, const Matrix& x, double eps = 1e-6);

/// "(rows x cols)" for error messages.
std::string shape_string(const Matrix& m);

}  // namespace w1ot::ad
