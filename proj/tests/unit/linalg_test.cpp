#include "delayctl/linalg.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "delayctl/errors.hpp"

namespace delayctl {
namespace {

GTEST_TEST(MatExp, ZeroMatrixGivesIdentity) {
  const MatrixXd a = MatrixXd::Zero(3, 3);
  EXPECT_TRUE(mat_exp(1.7, a).isApprox(MatrixXd::Identity(3, 3), 0.0));
}

GTEST_TEST(MatExp, Scalar) {
  MatrixXd a(1, 1);
  a << 1.0;
  EXPECT_NEAR(mat_exp(1.0, a)(0, 0), std::exp(1.0), 1e-14);
}

GTEST_TEST(MatExp, NilpotentSeriesTruncates) {
  MatrixXd a(2, 2);
  // clang-format off
  a << 0, 1,
       0, 0;
  // clang-format on
  MatrixXd expected(2, 2);
  expected << 1, 2, 0, 1;
  EXPECT_LT((mat_exp(2.0, a) - expected).norm(), 1e-14);
}

GTEST_TEST(MatExp, RotationGenerator) {
  MatrixXd a(2, 2);
  a << 0, -1, 1, 0;
  const double t = 10.0;
  MatrixXd expected(2, 2);
  expected << std::cos(t), -std::sin(t), std::sin(t), std::cos(t);
  EXPECT_LT((mat_exp(t, a) - expected).norm(), 1e-12);
}

GTEST_TEST(MatExp, RelativeAccuracyAtNormFifty) {
  MatrixXd a(2, 2);
  a << -50, 0, 0, 25;
  const MatrixXd e = mat_exp(1.0, a);
  EXPECT_NEAR(e(0, 0) / std::exp(-50.0), 1.0, 1e-12);
  EXPECT_NEAR(e(1, 1) / std::exp(25.0), 1.0, 1e-12);
}

GTEST_TEST(MatExp, OverflowThrows) {
  MatrixXd a(1, 1);
  a << 1e4;
  EXPECT_THROW(mat_exp(1.0, a), NumericError);
}

GTEST_TEST(PsdFactor, RankDeficient) {
  MatrixXd q(2, 2);
  q << 4, 0, 0, 0;
  const PsdFactor f = psd_factor(q);
  EXPECT_EQ(f.rank, 1);
  EXPECT_LT((f.sqrt * f.sqrt - q).norm(), 1e-10);
  MatrixXd proj(2, 2);
  proj << 1, 0, 0, 0;
  EXPECT_LT((f.pinv_sqrt * f.sqrt - proj).norm(), 1e-10);
  EXPECT_NEAR(f.pinv(0, 0), 0.25, 1e-14);
}

GTEST_TEST(PsdFactor, ClipsRoundOffNegatives) {
  MatrixXd q(2, 2);
  q << 1, 1, 1, 1 - 1e-17;
  const PsdFactor f = psd_factor(q);
  EXPECT_EQ(f.rank, 1);
  EXPECT_GE(f.eigenvalues.minCoeff(), 0.0);
}

GTEST_TEST(RangeResidual, ColumnSpaceMembership) {
  MatrixXd sigma(2, 1);
  sigma << 1, 0;
  MatrixXd in(2, 1), out(2, 1);
  in << 3, 0;
  out << 0, 1;
  EXPECT_LT(range_residual(sigma, in), 1e-14);
  EXPECT_NEAR(range_residual(sigma, out), 1.0, 1e-14);
}

}  // namespace
}  // namespace delayctl
