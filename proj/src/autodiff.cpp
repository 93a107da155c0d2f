#include "kvalign/autodiff.hpp"

#include "kvalign/errors.hpp"

#include <string>
#include <utility>

namespace kvalign::ad {

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), false, false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::variable(Matrix value) {
  nodes_.push_back(Node{std::move(value), Matrix(), true, false, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, const std::vector<Var>& inputs, Backward backward) {
  bool needs = false;
  for (const Var& v : inputs) needs = needs || nodes_[v.id()].requires_grad;
  nodes_.push_back(Node{std::move(value), Matrix(), needs, false, needs ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var root) {
  if (value(root).size() != 1) throw ShapeMismatch("backward() needs a scalar root");
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  accumulate(root, Matrix::Ones(1, 1));
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (!n.has_grad) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

namespace {

void require_same_shape(Var a, Var b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeMismatch(std::string(op) + ": shapes differ (" + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                        std::to_string(b.cols()) + ")");
}

}  // namespace

Var matmul(Var a, Var b) {
  if (a.cols() != b.rows()) throw ShapeMismatch("matmul: inner dimensions differ");
  Tape& t = *a.tape();
  return t.record(a.value() * b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g * b.value().transpose());
    if (tp.requires_grad(b)) tp.accumulate(b, a.value().transpose() * g);
  });
}

Var add(Var a, Var b) {
  require_same_shape(a, b, "add");
  return a.tape()->record(a.value() + b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a, b, "sub");
  return a.tape()->record(a.value() - b.value(), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g);
    tp.accumulate(b, -g);
  });
}

Var add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeMismatch("add_n of nothing");
  Matrix v = xs.front().value();
  for (std::size_t i = 1; i < xs.size(); ++i) {
    require_same_shape(xs.front(), xs[i], "add_n");
    v += xs[i].value();
  }
  return xs.front().tape()->record(std::move(v), xs, [xs](Tape& tp, const Matrix& g) {
    for (const Var& x : xs) tp.accumulate(x, g);
  });
}

Var scale(Var a, double s) {
  return a.tape()->record(a.value() * s, {a}, [a, s](Tape& tp, const Matrix& g) { tp.accumulate(a, g * s); });
}

Var hadamard(Var a, Var b) {
  require_same_shape(a, b, "hadamard");
  return a.tape()->record(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) tp.accumulate(a, g.cwiseProduct(b.value()));
    if (tp.requires_grad(b)) tp.accumulate(b, g.cwiseProduct(a.value()));
  });
}

Var mul_rowwise(Var a, Var r) {
  if (r.rows() != 1 || r.cols() != a.cols()) throw ShapeMismatch("mul_rowwise: row shape mismatch");
  Matrix v = a.value().array().rowwise() * r.value().row(0).array();
  return a.tape()->record(std::move(v), {a, r}, [a, r](Tape& tp, const Matrix& g) {
    if (tp.requires_grad(a)) {
      Matrix ga = g.array().rowwise() * r.value().row(0).array();
      tp.accumulate(a, ga);
    }
    if (tp.requires_grad(r)) tp.accumulate(r, g.cwiseProduct(a.value()).colwise().sum());
  });
}

Var sigmoid(Var a) {
  Matrix y = (1.0 + (-a.value().array()).exp()).inverse().matrix();
  return a.tape()->record(y, {a}, [a, y](Tape& tp, const Matrix& g) {
    tp.accumulate(a, (g.array() * y.array() * (1.0 - y.array())).matrix());
  });
}

Var row_softmax(Var a) {
  Matrix y = (a.value().colwise() - a.value().rowwise().maxCoeff()).array().exp().matrix();
  y.array().colwise() /= y.rowwise().sum().array();
  return a.tape()->record(y, {a}, [a, y](Tape& tp, const Matrix& g) {
    const Vector inner = g.cwiseProduct(y).rowwise().sum();
    tp.accumulate(a, (y.array() * (g.colwise() - inner).array()).matrix());
  });
}

Var log_softmax_rows(Var a) {
  const Vector mx = a.value().rowwise().maxCoeff();
  const Matrix shifted = a.value().colwise() - mx;
  const Vector lse = shifted.array().exp().rowwise().sum().log().matrix();
  Matrix y = shifted.colwise() - lse;
  Matrix p = y.array().exp().matrix();
  return a.tape()->record(std::move(y), {a}, [a, p](Tape& tp, const Matrix& g) {
    const Vector gs = g.rowwise().sum();
    tp.accumulate(a, g - (p.array().colwise() * gs.array()).matrix());
  });
}

Var transpose(Var a) {
  return a.tape()->record(a.value().transpose(), {a},
                          [a](Tape& tp, const Matrix& g) { tp.accumulate(a, g.transpose()); });
}

Var concat_rows(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeMismatch("concat_rows of nothing");
  Eigen::Index rows = 0;
  const Eigen::Index cols = xs.front().cols();
  for (const Var& x : xs) {
    if (x.cols() != cols) throw ShapeMismatch("concat_rows: column counts differ");
    rows += x.rows();
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (const Var& x : xs) {
    v.middleRows(at, x.rows()) = x.value();
    at += x.rows();
  }
  return xs.front().tape()->record(std::move(v), xs, [xs](Tape& tp, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& x : xs) {
      if (tp.requires_grad(x)) tp.accumulate(x, g.middleRows(off, x.rows()));
      off += x.rows();
    }
  });
}

Var concat_cols(const std::vector<Var>& xs) {
  if (xs.empty()) throw ShapeMismatch("concat_cols of nothing");
  Eigen::Index cols = 0;
  const Eigen::Index rows = xs.front().rows();
  for (const Var& x : xs) {
    if (x.rows() != rows) throw ShapeMismatch("concat_cols: row counts differ");
    cols += x.cols();
  }
  Matrix v(rows, cols);
  Eigen::Index at = 0;
  for (const Var& x : xs) {
    v.middleCols(at, x.cols()) = x.value();
    at += x.cols();
  }
  return xs.front().tape()->record(std::move(v), xs, [xs](Tape& tp, const Matrix& g) {
    Eigen::Index off = 0;
    for (const Var& x : xs) {
      if (tp.requires_grad(x)) tp.accumulate(x, g.middleCols(off, x.cols()));
      off += x.cols();
    }
  });
}

Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.rows()) throw ShapeMismatch("slice_rows out of range");
  return a.tape()->record(a.value().middleRows(start, count), {a}, [a, start, count](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleRows(start, count) = g;
    tp.accumulate(a, full);
  });
}

Var slice_cols(Var a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ShapeMismatch("slice_cols out of range");
  return a.tape()->record(a.value().middleCols(start, count), {a}, [a, start, count](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full.middleCols(start, count) = g;
    tp.accumulate(a, full);
  });
}

Var mean_rows(Var a) {
  if (a.rows() == 0) throw ShapeMismatch("mean_rows of an empty matrix");
  const double n = static_cast<double>(a.rows());
  return a.tape()->record(a.value().colwise().mean(), {a}, [a, n](Tape& tp, const Matrix& g) {
    tp.accumulate(a, g.replicate(a.rows(), 1) / n);
  });
}

Var normalize_rows(Var a) {
  const Vector norms = a.value().rowwise().norm();
  if (norms.size() > 0 && !(norms.minCoeff() >= 1e-15)) throw ZeroVector("cannot normalize a zero row");
  Matrix y = a.value().array().colwise() / norms.array();
  return a.tape()->record(y, {a}, [a, y, norms](Tape& tp, const Matrix& g) {
    const Vector inner = g.cwiseProduct(y).rowwise().sum();
    Matrix ga = g - (y.array().colwise() * inner.array()).matrix();
    ga.array().colwise() /= norms.array();
    tp.accumulate(a, ga);
  });
}

Var sum(Var a) {
  Matrix v(1, 1);
  v(0, 0) = a.value().sum();
  return a.tape()->record(std::move(v), {a}, [a](Tape& tp, const Matrix& g) {
    tp.accumulate(a, Matrix::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

Var pick(Var a, Eigen::Index r, Eigen::Index c) {
  if (r < 0 || c < 0 || r >= a.rows() || c >= a.cols()) throw IndexOutOfRange("pick out of range");
  Matrix v(1, 1);
  v(0, 0) = a.value()(r, c);
  return a.tape()->record(std::move(v), {a}, [a, r, c](Tape& tp, const Matrix& g) {
    Matrix full = Matrix::Zero(a.rows(), a.cols());
    full(r, c) = g(0, 0);
    tp.accumulate(a, full);
  });
}

}  // namespace kvalign::ad
