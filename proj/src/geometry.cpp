#include "kvalign/geometry.hpp"

#include "kvalign/errors.hpp"

#include <cmath>
#include <type_traits>

namespace kvalign {

KernelSpec KernelSpec::polynomial(double offset, int degree) {
  if (!(offset >= 0.0) || !std::isfinite(offset))
    throw InvalidArgument("polynomial kernel offset must be finite and >= 0");
  if (degree < 1) throw InvalidArgument("polynomial kernel degree must be >= 1");
  return KernelSpec(PolynomialKernel{offset, degree});
}

KernelSpec KernelSpec::rbf(double bandwidth) {
  if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
    throw InvalidArgument("RBF bandwidth must be finite and > 0");
  return KernelSpec(RbfKernel{bandwidth});
}

KernelSpec KernelSpec::parse(const std::string& name, double sigma, double offset, int degree) {
  if (name == "linear") return linear();
  if (name == "poly" || name == "polynomial") return polynomial(offset, degree);
  if (name == "rbf") return rbf(sigma);
  throw InvalidArgument("unknown kernel '" + name + "'");
}

std::string KernelSpec::name() const {
  return std::visit(
      [](const auto& k) -> std::string {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, LinearKernel>) return "linear";
        else if constexpr (std::is_same_v<K, PolynomialKernel>) return "poly";
        else return "rbf";
      },
      variant_);
}

bool operator==(const KernelSpec& a, const KernelSpec& b) {
  if (a.variant_.index() != b.variant_.index()) return false;
  if (const auto* p = std::get_if<PolynomialKernel>(&a.variant_)) {
    const auto& q = std::get<PolynomialKernel>(b.variant_);
    return p->offset == q.offset && p->degree == q.degree;
  }
  if (const auto* r = std::get_if<RbfKernel>(&a.variant_))
    return r->bandwidth == std::get<RbfKernel>(b.variant_).bandwidth;
  return true;
}

namespace geometry {
namespace {

void check_k(std::size_t k, std::size_t max_k) {
  if (k > max_k)
    throw InvalidArgument("volume over " + std::to_string(k) + " vectors exceeds maximum " +
                          std::to_string(max_k));
}

}  // namespace

GramMatrix gram(const std::vector<Embedding>& vs) {
  const Matrix a = stack_rows(vs);
  Matrix g = a * a.transpose();
  // symmetric by construction, not just up to round-off
  g.triangularView<Eigen::StrictlyLower>() = g.transpose().triangularView<Eigen::StrictlyLower>();
  return {g};
}

double volume(const std::vector<Embedding>& vs, std::size_t max_k) {
  const std::size_t dim = common_dim(vs);
  check_k(vs.size(), max_k);
  if (vs.size() == 1) return vs.front().norm();
  if (vs.size() > dim) return 0.0;
  return std::sqrt(det_psd(gram(vs)));
}

double kernel_eval(const KernelSpec& spec, const Vector& x, const Vector& z) {
  if (x.size() != z.size())
    throw DimensionMismatch("kernel arguments differ in dimension");
  return std::visit(
      [&](const auto& k) -> double {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, LinearKernel>) {
          return x.dot(z);
        } else if constexpr (std::is_same_v<K, PolynomialKernel>) {
          return std::pow(x.dot(z) + k.offset, k.degree);
        } else {
          return std::exp(-(x - z).squaredNorm() / (2.0 * k.bandwidth * k.bandwidth));
        }
      },
      spec.variant());
}

double kernel_eval(const KernelSpec& spec, const Embedding& x, const Embedding& z) {
  return kernel_eval(spec, x.values(), z.values());
}

GramMatrix kernel_gram(const KernelSpec& spec, const std::vector<Embedding>& vs) {
  if (spec.is_linear()) return gram(vs);
  common_dim(vs);
  const auto k = static_cast<Eigen::Index>(vs.size());
  Matrix m(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    m(i, i) = kernel_eval(spec, vs[static_cast<std::size_t>(i)], vs[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = i + 1; j < k; ++j) {
      m(i, j) = kernel_eval(spec, vs[static_cast<std::size_t>(i)], vs[static_cast<std::size_t>(j)]);
      m(j, i) = m(i, j);
    }
  }
  return {m};
}

double kernel_volume(const KernelSpec& spec, const std::vector<Embedding>& vs, std::size_t max_k) {
  if (spec.is_linear()) return volume(vs, max_k);
  common_dim(vs);
  check_k(vs.size(), max_k);
  return std::sqrt(det_psd(kernel_gram(spec, vs)));
}

double det_psd(const GramMatrix& m) {
  const Matrix& a = m.entries;
  if (a.rows() != a.cols()) throw InvalidArgument("determinant of a non-square matrix");
  if (!a.allFinite()) throw InvalidArgument("matrix has non-finite entries");
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-9) throw NonSymmetric("matrix is not symmetric");

  Eigen::LLT<Matrix> llt(a);
  if (llt.info() == Eigen::Success) {
    const double d = llt.matrixL().toDenseMatrix().diagonal().prod();
    return d * d;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseMax(0.0).prod();
}

double min_eigenvalue(const GramMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m.entries, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

}  // namespace geometry
}  // namespace kvalign
