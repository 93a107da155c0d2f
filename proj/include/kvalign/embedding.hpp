#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace kvalign {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Fixed-dimension real vector. Values are always finite; the normalized tag
/// is only set when the L2 norm is within 1e-9 of one.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(Vector values, bool normalized = false);
  Embedding(std::initializer_list<double> values);

  std::size_t dim() const noexcept { return static_cast<std::size_t>(values_.size()); }
  const Vector& values() const noexcept { return values_; }
  bool normalized() const noexcept { return normalized_; }
  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }
  double norm() const { return values_.norm(); }

  friend bool operator==(const Embedding& a, const Embedding& b) {
    return a.normalized_ == b.normalized_ && a.values_.size() == b.values_.size() &&
           a.values_ == b.values_;
  }

 private:
  Vector values_;
  bool normalized_ = false;
};

/// Unit-L2 rescaling. Throws ZeroVector when the norm is below 1e-15.
Embedding normalize(const Embedding& e);
Embedding normalize(const Vector& v);

/// Stacks embeddings as the rows of a matrix. All must share a dimension.
Matrix stack_rows(const std::vector<Embedding>& es);

/// Throws DimensionMismatch unless every embedding has the same dim. Returns it.
std::size_t common_dim(const std::vector<Embedding>& es);

}  // namespace kvalign
