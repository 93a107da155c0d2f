#include "kvalign/embedding.hpp"
#include "kvalign/errors.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace kvalign;

TEST(Embedding, NormalizeGivesUnitNorm) {
  const Embedding e = normalize(Embedding{3.0, 4.0});
  EXPECT_TRUE(e.normalized());
  EXPECT_NEAR(e[0], 0.6, 1e-15);
  EXPECT_NEAR(e[1], 0.8, 1e-15);
}

TEST(Embedding, NormalizeRejectsZero) {
  EXPECT_THROW(normalize(Embedding{0.0, 0.0, 0.0}), ZeroVector);
  EXPECT_THROW(normalize(Vector::Constant(4, 1e-17)), ZeroVector);
}

TEST(Embedding, RejectsNonFinite) {
  EXPECT_THROW((Embedding{1.0, std::numeric_limits<double>::quiet_NaN()}), InvalidArgument);
  EXPECT_THROW((Embedding{std::numeric_limits<double>::infinity()}), InvalidArgument);
}

TEST(Embedding, NormalizedTagRequiresUnitNorm) {
  EXPECT_THROW(Embedding(Vector::Constant(2, 1.0), true), InvalidArgument);
  EXPECT_NO_THROW(Embedding(Vector::Unit(3, 1), true));
}

TEST(Embedding, StackAndCommonDim) {
  const std::vector<Embedding> es{Embedding{1.0, 2.0}, Embedding{3.0, 4.0}};
  const Matrix m = stack_rows(es);
  EXPECT_EQ(m.rows(), 2);
  EXPECT_EQ(m(1, 0), 3.0);
  EXPECT_EQ(common_dim(es), 2u);
  EXPECT_THROW(common_dim({Embedding{1.0}, Embedding{1.0, 2.0}}), DimensionMismatch);
}
