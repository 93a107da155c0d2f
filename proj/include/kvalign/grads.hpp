#pragma once

#include "kvalign/autodiff.hpp"
#include "kvalign/geometry.hpp"

#include <functional>
#include <vector>

namespace kvalign::grads {

/// One gradient vector per differentiated input, in input order.
struct GradientSet {
  std::vector<Vector> per_input;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::vector<double> per_component_errors;
  bool passed = false;
  double tolerance = 0.0;
};

using ScalarFunction = std::function<double(const Vector&)>;

inline constexpr double kFiniteDiffStep = 1e-5;
inline constexpr double kDegenerateEigenvalue = 1e-10;

/// True when the kernel Gram of vs has smallest eigenvalue <= 1e-10, i.e. the
/// square-root volume has no usable derivative there.
bool is_degenerate(const KernelSpec& spec, const std::vector<Vector>& vs);

/// d Vol_H / d vs[i] via d sqrt(det K)/dK = (sqrt(det K)/2) K^-1 and the
/// kernel partials. Throws DegenerateConfiguration at singular Grams.
GradientSet grad_kernel_volume(const KernelSpec& spec, const std::vector<Embedding>& vs);
GradientSet grad_kernel_volume(const KernelSpec& spec, const std::vector<Vector>& vs);

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h.
Vector finite_diff(const ScalarFunction& f, const Vector& x, double h = kFiniteDiffStep);

/// Relative error per component is |a - g| / max(1e-8, |a| + |g|).
GradCheckReport grad_check(const ScalarFunction& f, const Vector& analytic, const Vector& x,
                           double tolerance, double h = kFiniteDiffStep);
GradCheckReport grad_check(const ScalarFunction& f,
                           const std::function<Vector(const Vector&)>& analytic_grad,
                           const Vector& x, double tolerance, double h = kFiniteDiffStep);

/// Tape node computing Vol_H over 1 x d row inputs, differentiated with
/// grad_kernel_volume on the backward pass.
ad::Var kernel_volume_node(const KernelSpec& spec, const std::vector<ad::Var>& rows);

}  // namespace kvalign::grads
