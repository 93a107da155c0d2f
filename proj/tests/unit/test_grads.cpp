#include "helpers.hpp"
#include "kvalign/errors.hpp"
#include "kvalign/grads.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace kvalign;
using namespace testing_helpers;

namespace {

oracle::KernelParams oracle_rbf(double sigma) { return {oracle::Kernel::Rbf, sigma}; }

}  // namespace

TEST(FiniteDiff, Quadratic) {
  const auto f = [](const Vector& x) { return x.squaredNorm(); };
  const Vector g = grads::finite_diff(f, Vector::LinSpaced(2, 1.0, 2.0));
  EXPECT_NEAR(g[0], 2.0, 1e-8);
  EXPECT_NEAR(g[1], 4.0, 1e-8);
}

TEST(FiniteDiff, ConstantGivesZero) {
  const Vector g = grads::finite_diff([](const Vector&) { return 3.0; }, Vector::Ones(4));
  EXPECT_EQ(g, Vector::Zero(4));
}

TEST(FiniteDiff, VolumeOfAngleIsCosine) {
  const auto f = [](const Vector& th) {
    return geometry::volume({Embedding{1.0, 0.0}, Embedding{std::cos(th[0]), std::sin(th[0])}});
  };
  EXPECT_NEAR(grads::finite_diff(f, Vector::Constant(1, std::numbers::pi / 3.0))[0], 0.5, 1e-7);
}

TEST(FiniteDiff, NonFiniteIsReported) {
  const auto f = [](const Vector& x) { return std::log(x[0]); };
  EXPECT_THROW(grads::finite_diff(f, Vector::Constant(1, 0.0)), NonFiniteFunction);
}

TEST(GradCheck, AgreesAndDisagrees) {
  const auto f = [](const Vector& x) { return x.squaredNorm(); };
  const Vector x = Vector::LinSpaced(3, -1.0, 2.0);
  const auto good = grads::grad_check(f, Vector(2.0 * x), x, 1e-6);
  EXPECT_TRUE(good.passed);
  EXPECT_LT(good.max_relative_error, 1e-8);
  EXPECT_EQ(good.per_component_errors.size(), 3u);
  const auto bad = grads::grad_check(f, Vector(-2.0 * x), x, 1e-6);
  EXPECT_FALSE(bad.passed);
  EXPECT_EQ(bad.passed, bad.max_relative_error <= bad.tolerance);
}

TEST(GradKernelVolume, MatchesOracleFiniteDifferences) {
  Rng rng(17);
  for (const double sigma : {0.5, 1.0, 2.0}) {
    const KernelSpec spec = KernelSpec::rbf(sigma);
    for (int trial = 0; trial < 30; ++trial) {
      std::vector<Vector> vs{rng.unit_vector(8), rng.unit_vector(8), rng.unit_vector(8)};
      const auto g = grads::grad_kernel_volume(spec, vs);
      ASSERT_EQ(g.per_input.size(), 3u);
      for (std::size_t i = 0; i < 3; ++i) {
        const auto f = [&](const oracle::Vec& x) {
          std::vector<oracle::Vec> ov{to_vec(vs[0]), to_vec(vs[1]), to_vec(vs[2])};
          ov[i] = x;
          return oracle::kernel_volume(oracle_rbf(sigma), ov);
        };
        const oracle::Vec fd = oracle::central_diff(f, to_vec(vs[i]), 1e-5);
        for (int c = 0; c < 8; ++c) {
          const double a = g.per_input[i][c];
          const double rel = std::abs(a - fd[static_cast<std::size_t>(c)]) /
                             std::max(1e-8, std::abs(a) + std::abs(fd[static_cast<std::size_t>(c)]));
          EXPECT_LT(rel, 1e-4) << "sigma " << sigma << " input " << i << " component " << c;
        }
      }
    }
  }
}

TEST(GradKernelVolume, LinearKernelMatchesPlainVolumeGradient) {
  Rng rng(18);
  std::vector<Vector> vs{rng.gaussian_vector(5), rng.gaussian_vector(5), rng.gaussian_vector(5)};
  const auto g = grads::grad_kernel_volume(KernelSpec::linear(), vs);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto f = [&](const Vector& x) {
      std::vector<Embedding> es{Embedding(vs[0]), Embedding(vs[1]), Embedding(vs[2])};
      es[i] = Embedding(x);
      return geometry::volume(es);
    };
    EXPECT_TRUE(grads::grad_check(f, g.per_input[i], vs[i], 1e-6).passed);
  }
}

TEST(GradKernelVolume, PolynomialKernel) {
  Rng rng(19);
  const KernelSpec spec = KernelSpec::polynomial(1.0, 3);
  std::vector<Vector> vs{rng.unit_vector(6), rng.unit_vector(6)};
  const auto g = grads::grad_kernel_volume(spec, vs);
  const auto f = [&](const Vector& x) {
    return geometry::kernel_volume(spec, {Embedding(Vector(x.head(6))), Embedding(Vector(x.tail(6)))});
  };
  Vector x(12), a(12);
  x << vs[0], vs[1];
  a << g.per_input[0], g.per_input[1];
  EXPECT_TRUE(grads::grad_check(f, a, x, 1e-4).passed);
}

TEST(GradKernelVolume, IdenticalVectorsAreDegenerate) {
  const Vector x = Rng(3).unit_vector(4);
  EXPECT_TRUE(grads::is_degenerate(KernelSpec::rbf(1.0), {x, x, x}));
  EXPECT_THROW(grads::grad_kernel_volume(KernelSpec::rbf(1.0), std::vector<Vector>{x, x, x}), DegenerateConfiguration);
}

TEST(GradKernelVolume, StationaryDirectionHasZeroDerivative) {
  // Three unit vectors at 120 degrees in the first plane; moving one of them
  // along a third axis is orthogonal to every difference vector.
  const double c = std::cos(2.0 * std::numbers::pi / 3.0), s = std::sin(2.0 * std::numbers::pi / 3.0);
  const std::vector<Vector> vs{Vector::Unit(4, 0), (Vector(4) << c, s, 0, 0).finished(),
                               (Vector(4) << c, -s, 0, 0).finished()};
  const auto g = grads::grad_kernel_volume(KernelSpec::rbf(1.0), vs);
  EXPECT_NEAR(g.per_input[0].dot(Vector::Unit(4, 2)), 0.0, 1e-8);
  const auto f = [&](const Vector& e) {
    std::vector<Embedding> es{Embedding(Vector(vs[0] + e[0] * Vector::Unit(4, 2))), Embedding(vs[1]), Embedding(vs[2])};
    return geometry::kernel_volume(KernelSpec::rbf(1.0), es);
  };
  EXPECT_NEAR(grads::finite_diff(f, Vector::Zero(1))[0], 0.0, 1e-8);
}

TEST(KernelVolumeNode, BackwardMatchesDirectGradient) {
  Rng rng(20);
  const KernelSpec spec = KernelSpec::rbf(1.0);
  std::vector<Vector> vs{rng.unit_vector(5), rng.unit_vector(5), rng.unit_vector(5)};
  ad::Tape tape;
  std::vector<ad::Var> rows;
  for (const auto& v : vs) rows.push_back(tape.variable(v.transpose()));
  const ad::Var vol = grads::kernel_volume_node(spec, rows);
  tape.backward(vol);
  const auto direct = grads::grad_kernel_volume(spec, vs);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_LT((tape.grad(rows[i]).transpose() - direct.per_input[i]).norm(), 1e-14);
  EXPECT_NEAR(vol.scalar(), geometry::kernel_volume(spec, {Embedding(vs[0]), Embedding(vs[1]), Embedding(vs[2])}),
              1e-15);
}
