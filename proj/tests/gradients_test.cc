// Copyright 2026 The linatt Authors
// SPDX-License-Identifier: Apache-2.0

#include "linatt/gradients.h"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "oracles.h"

namespace linatt {
namespace {

constexpr AttentionVariant kVariants[] = {AttentionVariant::kVanillaSoftmax,
                                          AttentionVariant::kLinearQuadraticOrder,
                                          AttentionVariant::kLinearLinearOrder};

struct Problem {
  FeatureMap x;
  ProjectionSet p;
  Matrix upstream;
};

Problem MakeProblem(std::uint64_t seed, std::size_t n, std::size_t c, std::size_t r) {
  Rng rng(seed);
  FeatureMap x = FeatureMap::Random(n, c, rng);
  ProjectionSet p = InitProjections(c, r, rng);
  Matrix g = RandomUniform(n, c, -1, 1, rng);
  return {std::move(x), std::move(p), std::move(g)};
}

TEST(FiniteDifferenceTest, QuadraticFunction) {
  Rng rng(1);
  const Matrix theta = RandomUniform(3, 4, -2, 2, rng);
  const Matrix g = FiniteDifferenceOracle(
      [](const Matrix& m) { return FrobeniusDot(m, m); }, theta, 1e-5);
  EXPECT_LE(MaxAbsDiff(g, Scale(theta, 2.0)), 1e-8);
}

TEST(FiniteDifferenceTest, LinearFunctionIsExactToRounding) {
  Rng rng(2);
  const Matrix coeffs = RandomUniform(2, 5, -1, 1, rng);
  const Matrix theta = RandomUniform(2, 5, -1, 1, rng);
  const Matrix g = FiniteDifferenceOracle(
      [&](const Matrix& m) { return FrobeniusDot(coeffs, m); }, theta, 1e-4);
  EXPECT_LE(MaxAbsDiff(g, coeffs), 1e-11);
}

TEST(FiniteDifferenceTest, RejectsStepOutsideRange) {
  const Matrix theta(1, 1);
  auto f = [](const Matrix&) { return 0.0; };
  EXPECT_THROW(FiniteDifferenceOracle(f, theta, 1e-8), ContractViolation);
  EXPECT_THROW(FiniteDifferenceOracle(f, theta, 1e-2), ContractViolation);
  EXPECT_NO_THROW(FiniteDifferenceOracle(f, theta, 1e-7));
  EXPECT_NO_THROW(FiniteDifferenceOracle(f, theta, 1e-3));
}

TEST(FiniteDifferenceTest, RejectsNonFiniteValues) {
  const Matrix theta(2, 2);
  auto f = [](const Matrix& m) {
    return m(1, 1) > 0 ? std::numeric_limits<double>::infinity() : 0.0;
  };
  EXPECT_THROW(FiniteDifferenceOracle(f, theta), NumericalError);
}

TEST(BackwardTest, ZeroUpstreamGivesZeroGradients) {
  const Problem pr = MakeProblem(3, 6, 8, 2);
  const Matrix zero(6, 8);
  for (auto v : kVariants) {
    const GradientBundle g = Backward(v, pr.x, pr.p, zero);
    EXPECT_EQ(MaxAbs(g.d_x), 0.0);
    EXPECT_EQ(MaxAbs(g.d_wz), 0.0);
    EXPECT_EQ(MaxAbs(g.d_wy), 0.0);
    EXPECT_EQ(MaxAbs(g.d_wphi), 0.0);
    EXPECT_EQ(g.loss, 0.0);
  }
}

TEST(BackwardTest, ShapesMatchParameters) {
  const Problem pr = MakeProblem(4, 5, 16, 8);
  for (auto v : kVariants) {
    const GradientBundle g = Backward(v, pr.x, pr.p, pr.upstream);
    EXPECT_EQ(g.d_x.ShapeString(), pr.x.values().ShapeString());
    EXPECT_EQ(g.d_wz.ShapeString(), pr.p.w_z.ShapeString());
    EXPECT_EQ(g.d_wy.ShapeString(), pr.p.w_y.ShapeString());
    EXPECT_EQ(g.d_wphi.ShapeString(), pr.p.w_phi.ShapeString());
    EXPECT_TRUE(AllFinite(g.d_x));
    EXPECT_NEAR(g.loss, FrobeniusDot(Forward(v, pr.x, pr.p).output, pr.upstream), 1e-12);
  }
}

TEST(BackwardTest, RejectsMismatchedUpstream) {
  const Problem pr = MakeProblem(4, 5, 8, 8);
  for (auto v : kVariants) {
    EXPECT_THROW(Backward(v, pr.x, pr.p, Matrix(5, 4)), ContractViolation);
  }
}

TEST(BackwardVanillaTest, SinglePositionOnlyPhiPathCarriesGradient) {
  const Problem pr = MakeProblem(5, 1, 4, 2);
  const GradientBundle g = BackwardVanilla(pr.x, pr.p, pr.upstream);
  EXPECT_EQ(MaxAbs(g.d_wz), 0.0);
  EXPECT_EQ(MaxAbs(g.d_wy), 0.0);
  // out = phi = x w_phi, so dL/dw_phi = x^T g.
  EXPECT_LE(MaxAbsDiff(g.d_wphi, testing::NaiveMatMul(testing::IndexSwap(pr.x.values()),
                                                      pr.upstream)),
            1e-15);
}

TEST(BackwardVanillaTest, MatchesFiniteDifferences) {
  const Problem pr = MakeProblem(42, 6, 4, 2);
  const GradientCheck check =
      CheckAttentionGradients(AttentionVariant::kVanillaSoftmax, pr.x, pr.p, pr.upstream);
  EXPECT_LE(check.d_x, 1e-4);
  EXPECT_LE(check.d_w_first, 1e-4);
  EXPECT_LE(check.d_w_second, 1e-4);
  EXPECT_LE(check.d_w_third, 1e-4);
}

TEST(BackwardLinearTest, IdentityProjectionsMatchFiniteDifferences) {
  Rng rng(7);
  const FeatureMap x = FeatureMap::Random(5, 3, rng);
  ProjectionSet p{Matrix::Identity(3), Matrix::Identity(3), Matrix::Identity(3), 1};
  const Matrix g = RandomUniform(5, 3, -1, 1, rng);
  const GradientCheck check =
      CheckAttentionGradients(AttentionVariant::kLinearLinearOrder, x, p, g);
  EXPECT_LE(check.worst(), 1e-4);
}

TEST(BackwardLinearTest, BothEvaluationOrdersGiveTheSameGradients) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Problem pr = MakeProblem(seed, 6, 4, 1 + seed % 2);
    const GradientBundle a = BackwardLinear(pr.x, pr.p, pr.upstream);
    const GradientBundle b = BackwardLinearQuadratic(pr.x, pr.p, pr.upstream);
    EXPECT_LE(MaxAbsDiff(a.d_x, b.d_x), 1e-9);
    EXPECT_LE(MaxAbsDiff(a.d_wz, b.d_wz), 1e-9);
    EXPECT_LE(MaxAbsDiff(a.d_wy, b.d_wy), 1e-9);
    EXPECT_LE(MaxAbsDiff(a.d_wphi, b.d_wphi), 1e-9);
  }
}

TEST(BackwardLinearTest, NeverAllocatesQuadraticIntermediate) {
  const std::size_t n = 400, c = 16;
  const Problem pr = MakeProblem(9, n, c, 8);
  AllocationLedger ledger;
  {
    LedgerScope scope(ledger);
    BackwardLinear(pr.x, pr.p, pr.upstream);
  }
  EXPECT_LT(ledger.peak_floats, n * n);
  AllocationLedger quadratic;
  {
    LedgerScope scope(quadratic);
    BackwardLinearQuadratic(pr.x, pr.p, pr.upstream);
  }
  EXPECT_GE(quadratic.peak_floats, 2 * n * n);
}

TEST(BackwardLinearTest, InputGradientIsQuadraticInInput) {
  const Problem pr = MakeProblem(10, 7, 8, 2);
  const GradientBundle g1 = BackwardLinear(pr.x, pr.p, pr.upstream);
  const GradientBundle g2 =
      BackwardLinear(FeatureMap(Scale(pr.x.values(), 2.0)), pr.p, pr.upstream);
  EXPECT_LE(MaxAbsRelativeDiff(g2.d_x, Scale(g1.d_x, 4.0)), 1e-12);
}

TEST(BackwardAttentionTest, AllVariantsMatchFiniteDifferencesOnSeededInstances) {
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    Rng shape(seed);
    const std::size_t n = 1 + shape.NextU64() % 8;
    const std::size_t c = std::size_t{1} << (shape.NextU64() % 4);
    const std::size_t r = c >= 2 && seed % 2 ? 2 : 1;
    const Problem pr = MakeProblem(1000 + seed, n, c, r);
    for (auto v : kVariants) {
      EXPECT_LE(CheckAttentionGradients(v, pr.x, pr.p, pr.upstream).worst(), 1e-4)
          << VariantName(v) << " seed " << seed << " shape " << n << "x" << c;
    }
  }
}

TEST(BackwardCaTest, ZeroUpstream) {
  Rng rng(1);
  const FeatureMap x = FeatureMap::Random(5, 8, rng);
  const CAWeights w = InitCAWeights(8, 2, rng);
  const CAGradients g = BackwardCa(x, w, Matrix(5, 8));
  EXPECT_EQ(MaxAbs(g.d_x), 0.0);
  EXPECT_EQ(MaxAbs(g.d_w1), 0.0);
  EXPECT_EQ(MaxAbs(g.d_w2), 0.0);
}

TEST(BackwardCaTest, ZeroWeightsPassHalfTheUpstream) {
  Rng rng(2);
  const FeatureMap x = FeatureMap::Random(6, 8, rng);
  const CAWeights w{Matrix(8, 4), Matrix(4, 8), 2};
  const Matrix g = RandomUniform(6, 8, -1, 1, rng);
  const CAGradients grads = BackwardCa(x, w, g);
  EXPECT_EQ(grads.d_x, Scale(g, 0.5));
  EXPECT_EQ(MaxAbs(grads.d_w1), 0.0);
  EXPECT_EQ(MaxAbs(grads.d_w2), 0.0);
  EXPECT_LE(CheckCaGradients(x, w, g).worst(), 1e-4);
}

TEST(BackwardCaTest, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const FeatureMap x = FeatureMap::Random(7, 8, rng);
    const CAWeights w = InitCAWeights(8, 2, rng);
    const Matrix g = RandomUniform(7, 8, -1, 1, rng);
    EXPECT_LE(CheckCaGradients(x, w, g).worst(), 1e-4) << "seed " << seed;
  }
}

TEST(MaxRelativeErrorTest, UsesFlooredDenominator) {
  const Matrix a = Matrix::FromRows({{1.0, 0.0}});
  const Matrix b = Matrix::FromRows({{1.0001, 1e-13}});
  EXPECT_NEAR(MaxRelativeError(a, b), 1e-4 / 1.0001, 1e-12);
  const Matrix tiny = Matrix::FromRows({{0.0, 1e-9}});
  EXPECT_NEAR(MaxRelativeError(Matrix(1, 2), tiny), 0.1, 1e-12);
}

}  // namespace
}  // namespace linatt
