#include "delayctl/hypotheses.hpp"

#include <gtest/gtest.h>

#include "delayctl/demos.hpp"
#include "delayctl/errors.hpp"

namespace delayctl {
namespace {

GTEST_TEST(CheckHypotheses, ScalarDemo) {
  ProblemSpec s = demos::scalar();
  const HypothesisReport rep = check_hypotheses(s);
  EXPECT_TRUE(rep.kalman.controllable);
  ASSERT_TRUE(rep.kalman.r.has_value());
  EXPECT_EQ(*rep.kalman.r, 0);
  EXPECT_EQ(rep.image.condition, ImageCondition::kHpdebreg);
  EXPECT_NEAR(rep.lipschitz.L, 1.0, 1e-2);
  EXPECT_TRUE(rep.lipschitz_selection);
  EXPECT_TRUE(rep.all_hold());
}

GTEST_TEST(CheckHypotheses, IdentitySigmaHoldsTrivially) {
  ProblemSpec s = demos::rank_one();
  s.k = 2;
  s.sigma = MatrixXd::Identity(2, 2);
  EXPECT_EQ(check_hypotheses(s).image.condition, ImageCondition::kHpdebreg);
}

GTEST_TEST(CheckHypotheses, ImageFailureIsFlaggedNotThrown) {
  ProblemSpec s = demos::rank_one();
  s.a0.setZero();
  s.b0 << 0.0, 1.0;
  s.b1 = DelayMeasure::zero(2, 1, s.d);
  const HypothesisReport rep = check_hypotheses(s);
  EXPECT_EQ(rep.image.condition, ImageCondition::kFails);
  EXPECT_FALSE(rep.kalman.controllable);
  EXPECT_FALSE(rep.all_hold());
  EXPECT_FALSE(rep.warnings.empty());
}

GTEST_TEST(CheckHypotheses, DimensionMismatchThrows) {
  ProblemSpec s = demos::scalar();
  s.b0 = MatrixXd::Ones(2, 1);
  EXPECT_THROW(check_hypotheses(s), ValidationError);
}

GTEST_TEST(CheckHypotheses, DeclaredBoundViolation) {
  ProblemSpec s = demos::scalar();
  s.cost.terminal.bound = 0.5;  // the well reaches 2
  const HypothesisReport rep = check_hypotheses(s);
  EXPECT_FALSE(rep.all_hold());
}

GTEST_TEST(CheckHypotheses, Deterministic) {
  const ProblemSpec s = demos::running_cost();
  const HypothesisReport a = check_hypotheses(s), b = check_hypotheses(s);
  EXPECT_EQ(a.lipschitz.L, b.lipschitz.L);
  ASSERT_EQ(a.costs.size(), b.costs.size());
  for (std::size_t i = 0; i < a.costs.size(); ++i) EXPECT_EQ(a.costs[i].sampled_max, b.costs[i].sampled_max);
}

}  // namespace
}  // namespace delayctl
