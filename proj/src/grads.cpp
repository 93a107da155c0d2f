#include "kvalign/grads.hpp"

#include "kvalign/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <type_traits>

namespace kvalign::grads {
namespace {

Matrix kernel_matrix(const KernelSpec& spec, const std::vector<Vector>& vs) {
  const auto k = static_cast<Eigen::Index>(vs.size());
  Matrix m(k, k);
  for (Eigen::Index i = 0; i < k; ++i)
    for (Eigen::Index j = i; j < k; ++j) {
      m(i, j) = geometry::kernel_eval(spec, vs[static_cast<std::size_t>(i)], vs[static_cast<std::size_t>(j)]);
      m(j, i) = m(i, j);
    }
  return m;
}

// d kappa(x, z) / dx
Vector kernel_partial(const KernelSpec& spec, const Vector& x, const Vector& z) {
  return std::visit(
      [&](const auto& k) -> Vector {
        using K = std::decay_t<decltype(k)>;
        if constexpr (std::is_same_v<K, LinearKernel>) {
          return z;
        } else if constexpr (std::is_same_v<K, PolynomialKernel>) {
          return k.degree * std::pow(x.dot(z) + k.offset, k.degree - 1) * z;
        } else {
          const double s2 = k.bandwidth * k.bandwidth;
          return -std::exp(-(x - z).squaredNorm() / (2.0 * s2)) / s2 * (x - z);
        }
      },
      spec.variant());
}

void check_dims(const std::vector<Vector>& vs) {
  if (vs.empty()) throw InvalidArgument("empty vector sequence");
  for (const auto& v : vs)
    if (v.size() != vs.front().size()) throw DimensionMismatch("vectors differ in dimension");
}

}  // namespace

bool is_degenerate(const KernelSpec& spec, const std::vector<Vector>& vs) {
  check_dims(vs);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(kernel_matrix(spec, vs), Eigen::EigenvaluesOnly);
  return !(eig.eigenvalues().minCoeff() > kDegenerateEigenvalue);
}

GradientSet grad_kernel_volume(const KernelSpec& spec, const std::vector<Vector>& vs) {
  check_dims(vs);
  const Matrix k = kernel_matrix(spec, vs);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
  if (!(eig.eigenvalues().minCoeff() > kDegenerateEigenvalue))
    throw DegenerateConfiguration("kernel Gram is singular; volume gradient undefined");

  const Vector& lambda = eig.eigenvalues();
  const double vol = std::sqrt(lambda.prod());
  const Matrix k_inv = eig.eigenvectors() * lambda.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  const Matrix dvol_dk = 0.5 * vol * k_inv;

  // K_ij and K_ji both depend on v_i, and the kernel is symmetric, so the
  // diagonal term is covered by the same factor of two.
  GradientSet out;
  out.per_input.reserve(vs.size());
  for (std::size_t i = 0; i < vs.size(); ++i) {
    Vector g = Vector::Zero(vs[i].size());
    for (std::size_t b = 0; b < vs.size(); ++b)
      g += 2.0 * dvol_dk(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(b)) *
           kernel_partial(spec, vs[i], vs[b]);
    out.per_input.push_back(std::move(g));
  }
  return out;
}

GradientSet grad_kernel_volume(const KernelSpec& spec, const std::vector<Embedding>& vs) {
  std::vector<Vector> raw;
  raw.reserve(vs.size());
  for (const auto& e : vs) raw.push_back(e.values());
  return grad_kernel_volume(spec, raw);
}

Vector finite_diff(const ScalarFunction& f, const Vector& x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite difference step must be positive");
  Vector grad(x.size());
  Vector probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NonFiniteFunction("function is not finite near component " + std::to_string(i));
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

GradCheckReport grad_check(const ScalarFunction& f, const Vector& analytic, const Vector& x,
                           double tolerance, double h) {
  if (analytic.size() != x.size()) throw ShapeMismatch("analytic gradient size differs from x");
  const Vector numeric = finite_diff(f, x, h);
  GradCheckReport report;
  report.tolerance = tolerance;
  report.per_component_errors.resize(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double a = analytic[i];
    const double g = numeric[i];
    const double err = std::abs(a - g) / std::max(1e-8, std::abs(a) + std::abs(g));
    report.per_component_errors[static_cast<std::size_t>(i)] = err;
    report.max_relative_error = std::max(report.max_relative_error, err);
  }
  report.passed = report.max_relative_error <= tolerance;
  return report;
}

GradCheckReport grad_check(const ScalarFunction& f, const std::function<Vector(const Vector&)>& analytic_grad,
                           const Vector& x, double tolerance, double h) {
  return grad_check(f, analytic_grad(x), x, tolerance, h);
}

ad::Var kernel_volume_node(const KernelSpec& spec, const std::vector<ad::Var>& rows) {
  if (rows.empty()) throw InvalidArgument("kernel volume of nothing");
  std::vector<Vector> vs;
  vs.reserve(rows.size());
  for (const auto& r : rows) {
    if (r.rows() != 1) throw ShapeMismatch("kernel volume inputs must be 1 x d rows");
    vs.push_back(r.value().row(0).transpose());
  }
  check_dims(vs);
  std::vector<Embedding> es;
  es.reserve(vs.size());
  for (const auto& v : vs) es.emplace_back(v);
  Matrix value(1, 1);
  value(0, 0) = geometry::kernel_volume(spec, es);
  return rows.front().tape()->record(std::move(value), rows, [spec, rows, vs](ad::Tape& tp, const Matrix& g) {
    const GradientSet gs = grad_kernel_volume(spec, vs);
    for (std::size_t i = 0; i < rows.size(); ++i)
      tp.accumulate(rows[i], g(0, 0) * gs.per_input[i].transpose());
  });
}

}  // namespace kvalign::grads
