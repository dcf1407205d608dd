#include "delayctl/hjb.hpp"

#include <cmath>

#include <gtest/gtest.h>

#include "delayctl/demos.hpp"
#include "delayctl/errors.hpp"
#include "delayctl/expression.hpp"

namespace delayctl {
namespace {

VectorXd vec(double v) { return VectorXd::Constant(1, v); }
MatrixXd mat(double v) { return MatrixXd::Constant(1, 1, v); }

GridConfig small_grid() {
  GridConfig g;
  g.nodes = 81;
  g.time_steps = 16;
  g.theta_order = 16;
  g.quad_order = 16;
  return g;
}

AbstractState state(const ProblemSpec& s, double y0, bool with_history) {
  AbstractState x;
  x.x0 = vec(y0);
  x.x1 = with_history ? Segment::constant(vec(0.25), s.d) : Segment::zero(1, s.d);
  return x;
}

// U = {0}, l1 = 0, phi = y^2, sigma = 1: w(t, y) = y^2 + t.
GTEST_TEST(PicardSolve, ClosedFormQuadratic) {
  const ProblemSpec s = demos::closed_form();
  const SolveResult r = picard_solve(s, small_grid());
  EXPECT_TRUE(r.report.converged);
  for (double t : {0.0, 0.3, 0.77, 1.0}) {
    for (double y : {-1.0, 0.0, 0.4, 1.3}) {
      EXPECT_NEAR(r.field.value(t, vec(y)), y * y + t, 1e-8) << t << " " << y;
    }
  }
  const AbstractState x = lift_initial(s);
  const double tau = s.T - 0.25;
  const double yr = reduced_coordinate(tau, x, s.a0)(0);
  EXPECT_NEAR(evaluate_v(s, r.field, 0.25, x), yr * yr + tau, 1e-8);
  // grad^B (y^2 + t) = 2 y D.
  const double D = etAB0(tau, s)(0, 0);
  EXPECT_NEAR(grad_B_v(s, r.field, 0.25, x)(0), 2.0 * yr * D, 1e-6);
}

GTEST_TEST(PicardSolve, ConstantTerminalGivesLinearGrowth) {
  ProblemSpec s = demos::scalar();
  s.cost.control = quadratic_control_cost(mat(1.0), vec(0.0), 0.7);
  s.cost.terminal = well_terminal_cost(vec(0.0), 1.0, 0.0);
  s.cost.terminal.value = [](const VectorXd&) { return 1.5; };
  s.cost.terminal.gradient = [](const VectorXd& y) { return VectorXd::Zero(y.size()).eval(); };
  const SolveResult r = picard_solve(s, small_grid());
  // fbar = 0, so f = c + t H_min(0) = 1.5 + 0.7 t.
  for (double t : {0.0, 0.5, 1.0}) EXPECT_NEAR(r.field.value(t, vec(0.2)), 1.5 + 0.7 * t, 1e-10);
  EXPECT_LE(r.report.iterations, 2);
}

GTEST_TEST(PicardSolve, GrowthDegreeAgainstQuadrature) {
  ProblemSpec s = demos::closed_form();
  s.cost.terminal.growth_degree = 8;
  GridConfig g = small_grid();
  g.quad_order = 4;  // exact through degree 7
  EXPECT_THROW(picard_solve(s, g), ValidationError);
  g.quad_order = 5;
  g.time_steps = 4;
  EXPECT_NO_THROW(picard_solve(s, g));
}

GTEST_TEST(PicardSolve, TimeDependentRunningCost) {
  ProblemSpec s = demos::closed_form();
  s.cost.terminal.value = [](const VectorXd&) { return 0.0; };
  s.cost.terminal.gradient = [](const VectorXd& y) { return VectorXd::Zero(y.size()).eval(); };
  s.cost.terminal.bound = 0.0;
  RunningCost l0;
  l0.value = [](double t, const VectorXd&) { return t; };
  l0.spatially_constant = true;
  l0.bound = s.T;
  s.cost.running = l0;
  const SolveResult r = picard_solve(s, small_grid());
  const AbstractState x = lift_initial(s);
  // v(t) = int_t^T s ds.
  for (double t : {0.0, 0.4, 0.9}) {
    EXPECT_NEAR(evaluate_v(s, r.field, t, x), 0.5 * (s.T * s.T - t * t), 1e-10) << t;
  }
}

GTEST_TEST(PicardSolve, ScalarDemoContracts) {
  const ProblemSpec s = demos::scalar();
  const SolveResult r = picard_solve(s, small_grid());
  ASSERT_TRUE(r.report.converged);
  EXPECT_LT(r.report.apriori_factor, 0.5);
  ASSERT_GE(r.report.ratios.size(), 2u);
  for (std::size_t k = 1; k < r.report.ratios.size(); ++k) {
    if (r.report.distances[k + 1] > 1e-13) EXPECT_LT(r.report.ratios[k], 1.0) << k;
  }
  // The well is bounded, so the a-priori sup-norm bound applies.
  EXPECT_TRUE(std::isfinite(r.report.apriori_bound));
  EXPECT_LE(weighted_norm(r.field, 0.0), r.report.apriori_bound);
  EXPECT_LT(r.report.mild_residual, 2e-10);
  EXPECT_LT(r.report.probe_residual, 1e-4);
  EXPECT_LT(r.report.probe_residual_grad, 1e-3);
  EXPECT_GE(r.report.iterations, 6);
  // Costs are nonnegative and the value cannot exceed the u = 0 cost <= depth.
  for (const auto& f : r.field.f) {
    EXPECT_GE(f.minCoeff(), -1e-9);
    EXPECT_LE(f.maxCoeff(), 2.0 + 1e-9);
  }
}

GTEST_TEST(WeightedNorm, MatchesHandComputation) {
  ReducedValueField f;
  f.n = f.m = 1;
  f.times = {0.0, 1.0};
  f.f = {VectorXd::Constant(2, 1.0), (VectorXd(2) << -3.0, 2.0).finished()};
  f.fbar = {MatrixXd::Zero(1, 2), MatrixXd::Constant(1, 2, 4.0)};
  EXPECT_DOUBLE_EQ(weighted_norm(f, 0.0), 3.0 + 4.0);
  EXPECT_NEAR(weighted_norm(f, 1.0), std::max(1.0, 3.0 / M_E) + 4.0 / M_E, 1e-15);
}

GTEST_TEST(GradB, SingularAtTerminalTime) {
  const ProblemSpec s = demos::scalar();
  const SolveResult r = picard_solve(s, small_grid());
  EXPECT_THROW(grad_B_v(s, r.field, s.T, lift_initial(s)), SingularityError);
  EXPECT_THROW(evaluate_v(s, r.field, s.T + 0.1, lift_initial(s)), DomainError);
}

GTEST_TEST(RunningDiscrepancy, VanishesWithoutHistory) {
  const ProblemSpec s = demos::running_cost();
  const SolveResult r = picard_solve(s, small_grid());
  EXPECT_NEAR(running_discrepancy(s, r.field, 0.2, state(s, 0.3, false)).difference(), 0.0, 1e-12);
  // a0 = 0 means the pullback ignores the delayed controls still to enter.
  EXPECT_GT(std::abs(running_discrepancy(s, r.field, 0.2, state(s, 0.3, true)).difference()), 1e-4);
}

GTEST_TEST(RunningDiscrepancy, VanishesForConstantCost) {
  ProblemSpec s = demos::distributed_delay();
  s.cost.running = constant_running_cost(0.5);
  const SolveResult r = picard_solve(s, small_grid());
  EXPECT_NEAR(running_discrepancy(s, r.field, 0.2, state(s, 0.3, true)).difference(), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(evaluate_v(s, r.field, 0.2, state(s, 0.3, true), true),
                   evaluate_v(s, r.field, 0.2, state(s, 0.3, true), false));
}

GTEST_TEST(SecondDerivative, ClosedFormHessian) {
  const ProblemSpec s = demos::closed_form();
  const SolveResult r = picard_solve(s, small_grid());
  const AbstractState x = lift_initial(s);
  // d^2/dy^2 (y^2 + t) = 2, times D.
  for (double t : {0.0, 0.5}) {
    const SecondDerivative h = grad_B_grad_v(s, r.field, t, x);
    const double D = etAB0(s.T - t, s)(0, 0);
    EXPECT_NEAR(h.form()(0, 0), 2.0 * D, 1e-6) << t;
    EXPECT_LT(h.asymmetry, 1e-8);
  }
}

GTEST_TEST(Mollify, GaussianSmoothingOfQuadratic) {
  const ScalarField phi = [](const VectorXd& y) { return y.squaredNorm(); };
  EXPECT_NEAR(mollify(phi, 1, 0.5)(vec(1.0)), 1.25, 1e-12);
}

}  // namespace
}  // namespace delayctl
