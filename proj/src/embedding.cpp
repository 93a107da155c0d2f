#include "kvalign/embedding.hpp"

#include "kvalign/errors.hpp"

#include <cmath>
#include <string>

namespace kvalign {

Embedding::Embedding(Vector values, bool normalized)
    : values_(std::move(values)), normalized_(normalized) {
  if (!values_.allFinite()) throw InvalidArgument("embedding has non-finite entries");
  if (normalized_ && std::abs(values_.norm() - 1.0) >= 1e-9)
    throw InvalidArgument("embedding tagged normalized but norm is " +
                          std::to_string(values_.norm()));
}

Embedding::Embedding(std::initializer_list<double> values)
    : Embedding(Eigen::Map<const Vector>(values.begin(), static_cast<Eigen::Index>(values.size()))) {}

Embedding normalize(const Vector& v) {
  const double n = v.norm();
  if (!(n >= 1e-15)) throw ZeroVector("cannot normalize a zero-length vector");
  return Embedding(v / n, true);
}

Embedding normalize(const Embedding& e) { return normalize(e.values()); }

std::size_t common_dim(const std::vector<Embedding>& es) {
  if (es.empty()) throw InvalidArgument("empty embedding sequence");
  const std::size_t d = es.front().dim();
  for (const auto& e : es)
    if (e.dim() != d)
      throw DimensionMismatch("embedding dims differ: " + std::to_string(d) + " vs " +
                              std::to_string(e.dim()));
  return d;
}

Matrix stack_rows(const std::vector<Embedding>& es) {
  const auto d = static_cast<Eigen::Index>(common_dim(es));
  Matrix m(static_cast<Eigen::Index>(es.size()), d);
  for (std::size_t i = 0; i < es.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = es[i].values().transpose();
  return m;
}

}  // namespace kvalign
