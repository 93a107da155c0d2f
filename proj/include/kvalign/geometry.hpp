#pragma once

#include "kvalign/embedding.hpp"

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

namespace kvalign {

/// Pairwise inner-product (or kernel) matrix of a vector sequence.
struct GramMatrix {
  Matrix entries;

  std::size_t k() const noexcept { return static_cast<std::size_t>(entries.rows()); }
};

struct LinearKernel {};
struct PolynomialKernel {
  double offset = 1.0;
  int degree = 2;
};
struct RbfKernel {
  double bandwidth = 1.0;
};

/// Selects the kernel behind a kernelized Gram matrix.
class KernelSpec {
 public:
  using Variant = std::variant<LinearKernel, PolynomialKernel, RbfKernel>;

  KernelSpec() : variant_(RbfKernel{}) {}

  static KernelSpec linear() { return KernelSpec(LinearKernel{}); }
  static KernelSpec polynomial(double offset, int degree);
  static KernelSpec rbf(double bandwidth);

  /// Accepts "linear", "poly"/"polynomial", "rbf" with the supplied parameters.
  static KernelSpec parse(const std::string& name, double sigma = 1.0, double offset = 1.0,
                          int degree = 2);

  const Variant& variant() const noexcept { return variant_; }
  bool is_linear() const noexcept { return std::holds_alternative<LinearKernel>(variant_); }
  std::string name() const;

  friend bool operator==(const KernelSpec& a, const KernelSpec& b);

 private:
  explicit KernelSpec(Variant v) : variant_(v) {}
  Variant variant_;
};

namespace geometry {

inline constexpr std::size_t kDefaultMaxK = 16;

GramMatrix gram(const std::vector<Embedding>& vs);

/// Parallelotope volume sqrt(det G). Sequences longer than the dimension are
/// linearly dependent and return exactly 0.
double volume(const std::vector<Embedding>& vs, std::size_t max_k = kDefaultMaxK);

double kernel_eval(const KernelSpec& spec, const Embedding& x, const Embedding& z);
double kernel_eval(const KernelSpec& spec, const Vector& x, const Vector& z);

GramMatrix kernel_gram(const KernelSpec& spec, const std::vector<Embedding>& vs);

double kernel_volume(const KernelSpec& spec, const std::vector<Embedding>& vs,
                     std::size_t max_k = kDefaultMaxK);

/// Determinant of a symmetric PSD matrix: Cholesky first, clamped
/// eigendecomposition when the factorization fails. Never negative.
double det_psd(const GramMatrix& m);

double min_eigenvalue(const GramMatrix& m);

}  // namespace geometry
}  // namespace kvalign
