#pragma once

// Reverse-mode differentiation over dense matrices. A Tape records every
// operation in evaluation order; backward() walks it once in reverse.

#include "kvalign/embedding.hpp"

#include <cstddef>
#include <functional>
#include <vector>

namespace kvalign::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  double scalar() const { return value()(0, 0); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, const Matrix& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value);
  Var variable(Matrix value);

  /// Appends an operation result. The node is a constant (and the closure is
  /// dropped) unless at least one input requires a gradient.
  Var record(Matrix value, const std::vector<Var>& inputs, Backward backward);

  const Matrix& value(Var v) const { return nodes_[v.id()].value; }
  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }

  /// Adds g into the gradient of v. No-op for constants.
  void accumulate(Var v, const Matrix& g);

  /// Seeds d(root)/d(root) = 1 and propagates. Root must be 1x1.
  void backward(Var root);

  /// Gradient of the last backward() root w.r.t. v; zeros if v was unreached.
  Matrix grad(Var v) const;

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(*this); }

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var add_n(const std::vector<Var>& xs);
Var scale(Var a, double s);
Var hadamard(Var a, Var b);
/// Multiplies every row of a (T x d) elementwise by the 1 x d row r.
Var mul_rowwise(Var a, Var r);
Var sigmoid(Var a);
Var row_softmax(Var a);
Var log_softmax_rows(Var a);
Var transpose(Var a);
Var concat_rows(const std::vector<Var>& xs);
Var concat_cols(const std::vector<Var>& xs);
Var slice_rows(Var a, Eigen::Index start, Eigen::Index count);
Var slice_cols(Var a, Eigen::Index start, Eigen::Index count);
Var mean_rows(Var a);
/// Scales each row to unit L2 norm; throws ZeroVector on a zero row.
Var normalize_rows(Var a);
Var sum(Var a);
Var pick(Var a, Eigen::Index r, Eigen::Index c);

}  // namespace kvalign::ad
