#include "helpers.hpp"
#include "kvalign/errors.hpp"
#include "kvalign/losses.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace kvalign;
using namespace testing_helpers;

namespace {

AlignmentBatch random_batch(Rng& rng, int b, int dim) {
  AlignmentBatch batch;
  for (int i = 0; i < b; ++i)
    batch.triplets.push_back({random_unit(rng, dim), random_unit(rng, dim), random_unit(rng, dim)});
  return batch;
}

std::vector<oracle::Triplet> to_oracle(const AlignmentBatch& batch) {
  std::vector<oracle::Triplet> out;
  for (const auto& t : batch.triplets) out.push_back({to_vec(t.text), to_vec(t.support), to_vec(t.vision)});
  return out;
}

oracle::KernelParams to_oracle(const KernelSpec& spec) {
  if (spec.is_linear()) return {oracle::Kernel::Linear};
  if (const auto* r = std::get_if<RbfKernel>(&spec.variant())) return {oracle::Kernel::Rbf, r->bandwidth};
  const auto& p = std::get<PolynomialKernel>(spec.variant());
  return {oracle::Kernel::Poly, 1.0, p.offset, p.degree};
}

}  // namespace

TEST(Losses, MatchLoopReference) {
  Rng rng(31);
  for (const Anchor anchor : {Anchor::Text, Anchor::Vision}) {
    for (const KernelSpec& kernel : {KernelSpec::rbf(1.0), KernelSpec::rbf(0.5), KernelSpec::linear(),
                                     KernelSpec::polynomial(1.0, 2)}) {
      for (const double tau : {0.07, 0.2, 1.0}) {
        const AlignmentBatch batch = random_batch(rng, 5, 6);
        const LossConfig cfg{tau, kernel, anchor};
        const bool text = anchor == Anchor::Text;
        const auto ob = to_oracle(batch);
        const double d2a = oracle::d2a(ob, to_oracle(kernel), tau, text);
        const double a2d = oracle::a2d(ob, to_oracle(kernel), tau, text);
        EXPECT_NEAR(losses::loss_d2a(batch, cfg), d2a, 1e-10);
        EXPECT_NEAR(losses::loss_a2d(batch, cfg), a2d, 1e-10);
        EXPECT_NEAR(losses::loss_align(batch, cfg), 0.5 * (d2a + a2d), 1e-10);
        EXPECT_NEAR(losses::loss_infonce(batch, cfg), oracle::infonce(ob, tau, text), 1e-10);
      }
    }
  }
}

TEST(Losses, VolumeMatrixMatchesOracleTable) {
  Rng rng(32);
  const AlignmentBatch batch = random_batch(rng, 4, 5);
  const LossConfig cfg{0.2, KernelSpec::rbf(1.0), Anchor::Vision};
  const Matrix v = losses::volume_matrix(batch, cfg);
  const auto table = oracle::volume_table(to_oracle(batch), to_oracle(cfg.kernel), false);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 4; ++i) EXPECT_NEAR(v(j, i), table[j][i], 1e-12);
}

TEST(Losses, LinearVolumeForcesLinearKernel) {
  Rng rng(33);
  const AlignmentBatch batch = random_batch(rng, 4, 5);
  const LossConfig rbf{0.2, KernelSpec::rbf(1.0), Anchor::Text};
  const LossConfig lin{0.2, KernelSpec::linear(), Anchor::Text};
  EXPECT_DOUBLE_EQ(losses::loss_linear_volume(batch, rbf), losses::loss_align(batch, lin));
}

TEST(Losses, SingleTripletGivesZero) {
  Rng rng(34);
  const AlignmentBatch batch = random_batch(rng, 1, 4);
  const LossConfig cfg;
  EXPECT_NEAR(losses::loss_d2a(batch, cfg), 0.0, 1e-15);
  EXPECT_NEAR(losses::loss_a2d(batch, cfg), 0.0, 1e-15);
  EXPECT_NEAR(losses::loss_infonce(batch, cfg), 0.0, 1e-15);
}

TEST(Losses, IdenticalTripletsGiveLogB) {
  Rng rng(35);
  const Embedding t = random_unit(rng, 6), s = random_unit(rng, 6), v = random_unit(rng, 6);
  for (int b : {2, 3, 7}) {
    AlignmentBatch batch;
    for (int i = 0; i < b; ++i) batch.triplets.push_back({t, s, v});
    EXPECT_NEAR(losses::loss_a2d(batch, LossConfig{}), std::log(b), 1e-12);
    EXPECT_NEAR(losses::loss_d2a(batch, LossConfig{}), std::log(b), 1e-12);
  }
}

TEST(Losses, PermutationInvariant) {
  Rng rng(36);
  AlignmentBatch batch = random_batch(rng, 6, 5);
  const LossConfig cfg;
  const double before = losses::loss_align(batch, cfg);
  const double nce = losses::loss_infonce(batch, cfg);
  std::reverse(batch.triplets.begin(), batch.triplets.end());
  std::swap(batch.triplets[0], batch.triplets[3]);
  EXPECT_NEAR(losses::loss_align(batch, cfg), before, 1e-12);
  EXPECT_NEAR(losses::loss_infonce(batch, cfg), nce, 1e-12);
}

TEST(Losses, CloserAnchorsGiveLowerLoss) {
  double prev = -1.0;
  for (const double pull : {2.0, 0.8, 0.3, 0.1}) {
    Rng rng(37);
    AlignmentBatch batch;
    for (int i = 0; i < 6; ++i) {
      const Vector c = rng.unit_vector(16);
      const Embedding s = normalize(Vector(c + 0.4 * rng.unit_vector(16)));
      const Embedding v = normalize(Vector(c + 0.4 * rng.unit_vector(16)));
      batch.triplets.push_back({normalize(Vector(c + pull * rng.unit_vector(16))), s, v});
    }
    const double loss = losses::loss_align(batch, LossConfig{});
    if (prev >= 0.0) {
      EXPECT_LT(loss, prev) << "pull " << pull;
    }
    prev = loss;
  }
}

TEST(Losses, Validation) {
  Rng rng(39);
  AlignmentBatch batch = random_batch(rng, 3, 4);
  EXPECT_THROW(losses::loss_align(batch, LossConfig{0.0}), InvalidArgument);
  EXPECT_THROW(losses::loss_align(AlignmentBatch{}, LossConfig{}), InvalidArgument);
  AlignmentBatch bad_dim = batch;
  bad_dim.triplets[1].vision = random_unit(rng, 5);
  EXPECT_THROW(losses::loss_align(bad_dim, LossConfig{}), DimensionMismatch);
  AlignmentBatch unnormalized = batch;
  unnormalized.triplets[2].text = Embedding(Vector::Constant(4, 1.0));
  EXPECT_THROW(losses::loss_align(unnormalized, LossConfig{}), InvalidArgument);
}

TEST(Losses, ObjectiveGradientMatchesFiniteDifferences) {
  Rng rng(40);
  const AlignmentBatch batch = random_batch(rng, 3, 4);
  const LossConfig cfg{0.3, KernelSpec::rbf(1.0), Anchor::Text};
  for (const auto objective : {losses::Objective::D2A, losses::Objective::A2D, losses::Objective::Align,
                               losses::Objective::InfoNCE, losses::Objective::LinearVolume}) {
    const auto og = losses::evaluate_with_gradient(objective, batch, cfg);
    EXPECT_NEAR(og.value, losses::evaluate(objective, batch, cfg), 1e-12);
    ASSERT_EQ(og.gradient.per_input.size(), 9u);
    // Perturb in the raw coordinates and renormalize, so compare tangential parts.
    for (std::size_t k = 0; k < 9; ++k) {
      const std::size_t item = k / 3, slot = k % 3;
      auto member = [&](AlignmentBatch& b) -> Embedding& {
        auto& t = b.triplets[item];
        return slot == 0 ? t.text : slot == 1 ? t.support : t.vision;
      };
      AlignmentBatch copy = batch;
      const Vector x0 = member(copy).values();
      const auto f = [&](const Vector& x) {
        member(copy) = Embedding(x, true);
        return losses::evaluate(objective, copy, cfg);
      };
      const Vector fd = grads::finite_diff(
          [&](const Vector& e) {
            // Move along the sphere: x0 cos|e| + e sin|e| / |e| for e tangent.
            const Vector t = e - x0 * x0.dot(e);
            const double n = t.norm();
            const Vector x = n == 0.0 ? x0 : Vector(x0 * std::cos(n) + t * (std::sin(n) / n));
            return f(x);
          },
          Vector::Zero(4));
      const Vector a = og.gradient.per_input[k];
      const Vector a_tan = a - x0 * x0.dot(a);
      const Vector fd_tan = fd - x0 * x0.dot(fd);
      EXPECT_LT((a_tan - fd_tan).norm(), 1e-6 * std::max(1.0, a_tan.norm())) << "member " << k;
    }
  }
}

TEST(Classify, SoftmaxOverCosines) {
  const std::vector<Embedding> protos{Embedding{1.0, 0.0}, Embedding{0.0, 1.0}, Embedding{-1.0, 0.0}};
  const auto p = losses::classify(Embedding{2.0, 0.0}, protos, 0.5);
  const double z = std::exp(2.0) + std::exp(0.0) + std::exp(-2.0);
  EXPECT_NEAR(p[0], std::exp(2.0) / z, 1e-14);
  EXPECT_NEAR(p[1], 1.0 / z, 1e-14);
  EXPECT_NEAR(p[2], std::exp(-2.0) / z, 1e-14);
  EXPECT_NEAR(losses::cross_entropy(p, 0), -std::log(std::exp(2.0) / z), 1e-12);
}

TEST(Classify, Errors) {
  EXPECT_THROW(losses::classify(Embedding{1.0, 0.0}, {}, 0.2), EmptyPrototypes);
  EXPECT_THROW(losses::classify(Embedding{1.0, 0.0}, {Embedding{1.0, 0.0, 0.0}}, 0.2), DimensionMismatch);
  EXPECT_THROW(losses::cross_entropy({0.5, 0.5}, 2), IndexOutOfRange);
  EXPECT_THROW(losses::cross_entropy({0.5, 0.4}, 0), InvalidArgument);
}
