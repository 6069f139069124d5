#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace lantern::ad {

using Matrix = Eigen::MatrixXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

class Parameter;
class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const { return value()(0, 0); }

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Wengert list for reverse-mode differentiation of dense matrix expressions.
///
/// Every node keeps its value and an accumulated gradient. backward() computes
/// d(root)/d(node) for the whole graph into fresh adjoints and then adds them
/// to the stored gradients, so calling it twice doubles every gradient.
/// Nodes created through parameter() also add their gradient to the bound
/// Parameter.
class Tape {
 public:
  using Adjoints = std::vector<Matrix>;
  using BackwardFn = std::function<void(const Matrix& out_adj, Adjoints& adj)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var constant(double value);
  Var variable(Matrix value);
  Var parameter(Parameter& param);

  /// Records an operation node. Used by the op functions; exposed for extensions.
  Var record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);

  void backward(const Var& root);
  void zero_grad();

  std::size_t size() const noexcept { return nodes_.size(); }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }

  static void accumulate(Matrix& slot, const Matrix& contribution);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
};

// Element-wise and linear-algebra operations. All inputs must live on the
// same tape; shape errors throw Error(ShapeMismatch) naming both shapes.

Var matmul(const Var& a, const Var& b);
/// Same shape, or one operand 1x1 (broadcast scalar).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Element-wise product (same shape, or one operand 1x1).
Var mul(const Var& a, const Var& b);
Var scalar_mul(const Var& a, double s);
Var add_constant(const Var& a, double c);
Var neg(const Var& a);
Var transpose(const Var& a);
/// Stacks vertically (axis 0) or horizontally (axis 1).
Var concat(std::span<const Var> parts, int axis);
Var row_select(const Var& a, std::span<const Eigen::Index> rows);
Var col_select(const Var& a, std::span<const Eigen::Index> cols);
Var element(const Var& a, Eigen::Index row, Eigen::Index col);
/// Column-wise softmax over the entries where mask is true; masked entries
/// are exactly zero.
Var softmax_masked(const Var& a, const Mask& mask);
/// Column-wise softmax over all entries.
Var softmax(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var softplus(const Var& a);
Var sum(const Var& a);
Var mean(const Var& a);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double s) { return scalar_mul(a, s); }
inline Var operator*(double s, const Var& a) { return scalar_mul(a, s); }

/// Causal mask for an n x n score matrix indexed [key j, query n]: j <= n.
Mask causal_mask(Eigen::Index n);
Mask full_mask(Eigen::Index rows, Eigen::Index cols);

}  // namespace lantern::ad
