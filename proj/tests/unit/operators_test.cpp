#include "delayctl/operators.hpp"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "delayctl/errors.hpp"
#include "delayctl/linalg.hpp"
#include "delayctl/quadrature.hpp"

namespace delayctl {
namespace {

MatrixXd scalar(double v) { return MatrixXd::Constant(1, 1, v); }

ProblemSpec base_spec(int n, int m, double d) {
  ProblemSpec s;
  s.n = n;
  s.m = m;
  s.k = n;
  s.a0 = MatrixXd::Zero(n, n);
  s.b0 = MatrixXd::Zero(n, m);
  s.sigma = MatrixXd::Identity(n, n);
  s.d = d;
  s.T = 1.0;
  s.b1 = DelayMeasure::zero(n, m, d);
  s.U = ControlSet::box(VectorXd::Constant(m, -1), VectorXd::Constant(m, 1));
  s.cost = {zero_running_cost(), zero_control_cost(m), zero_terminal_cost()};
  s.initial = {VectorXd::Zero(n), constant_history(VectorXd::Zero(m))};
  return s;
}

// Smooth random segment: sum of a few sines with random coefficients.
Segment random_segment(int n, double d, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  MatrixXd c(n, 3);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < 3; ++j) c(i, j) = g(rng);
  return Segment(n, d, [c, d](double xi) {
    VectorXd v(c.rows());
    for (Eigen::Index i = 0; i < c.rows(); ++i) {
      v(i) = c(i, 0) + c(i, 1) * std::sin(3.0 * xi / d) + c(i, 2) * std::cos(5.0 * xi);
    }
    return v;
  });
}

MatrixXd random_matrix(int r, int c, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  MatrixXd a(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) a(i, j) = g(rng);
  return a;
}

GTEST_TEST(Semigroup, IdentityAtZero) {
  std::mt19937_64 rng(1);
  AbstractState x{VectorXd::Constant(2, 1.5), random_segment(2, 0.5, rng)};
  const MatrixXd a0 = random_matrix(2, 2, rng);
  const AbstractState y = apply_semigroup(0.0, x, a0);
  EXPECT_EQ((y.x0 - x.x0).norm(), 0.0);
  EXPECT_EQ((y.x1(-0.3) - x.x1(-0.3)).norm(), 0.0);
}

GTEST_TEST(Semigroup, ScalarShiftExample) {
  AbstractState x{VectorXd::Constant(1, 2.0), Segment::constant(VectorXd::Constant(1, 1.0), 1.0)};
  const AbstractState y = apply_semigroup(0.5, x, scalar(0));
  EXPECT_NEAR(y.x0(0), 2.5, 1e-14);
  EXPECT_EQ(y.x1(-0.25)(0), 1.0);
  EXPECT_EQ(y.x1(-0.5)(0), 1.0);
  EXPECT_EQ(y.x1(-0.75)(0), 0.0);
  EXPECT_NEAR(reduced_coordinate(0.5, x, scalar(0))(0), 2.5, 1e-14);
}

GTEST_TEST(Semigroup, HistoryVanishesAfterDelay) {
  std::mt19937_64 rng(2);
  AbstractState x{VectorXd::Ones(2), random_segment(2, 0.5, rng)};
  const AbstractState y = apply_semigroup(0.7, x, random_matrix(2, 2, rng));
  EXPECT_TRUE(y.x1.is_zero());
}

GTEST_TEST(Semigroup, HistoryFreeReducedCoordinate) {
  std::mt19937_64 rng(3);
  const MatrixXd a0 = random_matrix(2, 2, rng);
  AbstractState x{VectorXd::Constant(2, 0.4), Segment::zero(2, 0.5)};
  for (double t : {0.0, 0.3, 1.1}) {
    EXPECT_LT((reduced_coordinate(t, x, a0) - mat_exp(t, a0) * x.x0).norm(), 1e-14);
  }
}

GTEST_TEST(Semigroup, GroupLaw) {
  std::mt19937_64 rng(4);
  const MatrixXd a0 = random_matrix(2, 2, rng, 0.5);
  AbstractState x{VectorXd::Constant(2, 0.3), random_segment(2, 0.5, rng)};
  for (double s : {0.1, 0.25, 0.6}) {
    for (double t : {0.05, 0.2, 0.45}) {
      const AbstractState a = apply_semigroup(s, apply_semigroup(t, x, a0), a0);
      const AbstractState b = apply_semigroup(s + t, x, a0);
      EXPECT_LT((a.x0 - b.x0).norm(), 1e-11);
      for (double xi : {-0.45, -0.2, -0.01}) EXPECT_LT((a.x1(xi) - b.x1(xi)).norm(), 1e-14);
    }
  }
}

GTEST_TEST(Semigroup, FiniteDimensionalCollapse) {
  std::mt19937_64 rng(5);
  const MatrixXd a0 = random_matrix(2, 2, rng, 0.5);
  AbstractState x{VectorXd::Constant(2, 0.3), random_segment(2, 0.5, rng)};
  const double t = 0.6, tau = 0.3;
  EXPECT_LT((reduced_coordinate(t + tau, x, a0) - mat_exp(tau, a0) * reduced_coordinate(t, x, a0)).norm(),
            1e-12);
}

GTEST_TEST(Semigroup, NegativeTimeThrows) {
  AbstractState x{VectorXd::Zero(1), Segment::zero(1, 1.0)};
  EXPECT_THROW(apply_semigroup(-0.1, x, scalar(0)), DomainError);
}

GTEST_TEST(AdjointSemigroup, Adjointness) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int trial = 0; trial < 8; ++trial) {
    const double d = 0.5;
    const MatrixXd a0 = random_matrix(2, 2, rng, 0.7);
    AbstractState x{random_matrix(2, 1, rng), random_segment(2, d, rng)};
    AdjointVector z{random_matrix(2, 1, rng), random_segment(2, d, rng)};
    const double t = unif(rng);
    const double lhs = inner(apply_semigroup(t, x, a0), z);
    const AdjointVector zt = apply_adjoint_semigroup(t, z, a0);
    const double rhs = inner(x, zt);
    EXPECT_NEAR(lhs, rhs, 1e-8) << "t = " << t;
  }
}

GTEST_TEST(AdjointSemigroup, HistoryFreeAfterDelay) {
  MatrixXd a0(1, 1);
  a0 << 0.5;
  AdjointVector z{VectorXd::Constant(1, 2.0), Segment::zero(1, 0.5)};
  const AdjointVector zt = apply_adjoint_semigroup(0.8, z, a0);
  for (double xi : {-0.5, -0.2, 0.0}) {
    EXPECT_NEAR(zt.z1(xi)(0), std::exp(0.5 * (xi + 0.8)) * 2.0, 1e-13);
  }
}

GTEST_TEST(Resolvent, ScalarCollapse) {
  AbstractState x{VectorXd::Constant(1, 3.0), Segment::zero(1, 1.0)};
  const AbstractState r = apply_resolvent(1.0, x, scalar(0));
  EXPECT_NEAR(r.x0(0), 3.0, 1e-15);
  EXPECT_TRUE(r.x1.is_zero());
  const AbstractState zero = apply_resolvent(2.0, zero_state(1, 1.0), scalar(0));
  EXPECT_EQ(zero.x0.norm(), 0.0);
}

GTEST_TEST(Resolvent, SingularThrows) {
  AbstractState x{VectorXd::Constant(1, 1.0), Segment::zero(1, 1.0)};
  EXPECT_THROW(apply_resolvent(0.5, x, scalar(0.5)), NumericError);
}

GTEST_TEST(Resolvent, InverseIdentity) {
  std::mt19937_64 rng(7);
  const double d = 0.5, N = 3.0;
  const MatrixXd a0 = random_matrix(2, 2, rng, 0.5);
  AbstractState x{random_matrix(2, 1, rng), random_segment(2, d, rng)};
  const AbstractState r = apply_resolvent(N, x, a0);
  const AbstractState ar = apply_generator(r, a0, 1e-4);
  const VectorXd back0 = N * r.x0 - ar.x0;
  EXPECT_LT((back0 - x.x0).norm(), 1e-10);
  for (double xi : {-0.4, -0.25, -0.1}) {
    const VectorXd back1 = N * r.x1(xi) - ar.x1(xi);
    // Centered differences: O(h^2) error.
    EXPECT_LT((back1 - x.x1(xi)).norm(), 1e-6);
  }
}

GTEST_TEST(EtAB0, AtZeroIsB0) {
  ProblemSpec s = base_spec(1, 1, 0.5);
  s.b0 = scalar(1.3);
  s.b1 = DelayMeasure::constant_density(scalar(2.0), 0.5);
  EXPECT_NEAR(etAB0(0.0, s)(0, 0), 1.3, 1e-15);
  // Density part integrates over [-min(t, d), 0].
  EXPECT_NEAR(etAB0(0.2, s)(0, 0), 1.3 + 0.4, 1e-14);
  EXPECT_NEAR(etAB0(0.9, s)(0, 0), 1.3 + 1.0, 1e-14);
}

GTEST_TEST(EtAB0, PointwiseDelayIndicator) {
  ProblemSpec s = base_spec(1, 1, 0.5);
  s.b0 = scalar(1.0);
  s.b1 = DelayMeasure::point(scalar(0.7), -0.5, 0.5);
  EXPECT_NEAR(etAB0(0.3, s)(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(etAB0(0.5, s)(0, 0), 1.7, 1e-15);  // closed-interval convention
  EXPECT_NEAR(etAB0(0.5, s, false)(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(etAB0(0.8, s)(0, 0), 1.7, 1e-15);
}

GTEST_TEST(EtAB0, AtomAtZeroIncludedAtTimeZero) {
  ProblemSpec s = base_spec(1, 1, 0.5);
  s.b0 = scalar(1.0);
  s.b1 = DelayMeasure::point(scalar(0.25), 0.0, 0.5);
  EXPECT_NEAR(etAB0(0.0, s)(0, 0), 1.25, 1e-15);
}

GTEST_TEST(EtAB0, MatchesQuadratureWithDrift) {
  ProblemSpec s = base_spec(1, 1, 0.5);
  s.a0 = scalar(0.8);
  s.b0 = scalar(1.0);
  s.b1 = DelayMeasure::constant_density(scalar(0.5), 0.5);
  const double t = 0.3;
  // e^{0.8 t} + 0.5 int_{-t}^0 e^{0.8 (t + r)} dr.
  const double expected = std::exp(0.8 * t) + 0.5 * (std::exp(0.8 * t) - 1.0) / 0.8;
  EXPECT_NEAR(etAB0(t, s)(0, 0), expected, 1e-12);
}

GTEST_TEST(BStar, ScalarExample) {
  ProblemSpec s = base_spec(1, 1, 1.0);
  s.b0 = scalar(2.0);
  s.b1 = DelayMeasure::constant_density(scalar(1.0), 1.0);
  AbstractState x{VectorXd::Constant(1, 3.0), Segment::constant(VectorXd::Constant(1, 1.0), 1.0)};
  EXPECT_NEAR(apply_Bstar(x, s)(0), 7.0, 1e-14);
  const MeasureImage bu = apply_B(VectorXd::Zero(1), s);
  EXPECT_EQ(bu.v0.norm(), 0.0);
  EXPECT_TRUE(bu.density.is_zero());
}

GTEST_TEST(BStar, Duality) {
  std::mt19937_64 rng(8);
  const double d = 0.5;
  ProblemSpec s = base_spec(2, 2, d);
  s.b0 = random_matrix(2, 2, rng);
  s.b1 = DelayMeasure::piecewise_constant({-d, -0.2, 0.0}, {random_matrix(2, 2, rng), random_matrix(2, 2, rng)});
  s.b1.add_atom(-0.35, random_matrix(2, 2, rng));
  s.b1.add_atom(-d, random_matrix(2, 2, rng));
  for (int trial = 0; trial < 5; ++trial) {
    const VectorXd u = random_matrix(2, 1, rng);
    AbstractState x{random_matrix(2, 1, rng), random_segment(2, d, rng)};
    EXPECT_NEAR(pair_B(apply_B(u, s), x), u.dot(apply_Bstar(x, s)), 1e-8);
  }
}

GTEST_TEST(BStar, NonFiniteAtAtomThrows) {
  ProblemSpec s = base_spec(1, 1, 0.5);
  s.b1 = DelayMeasure::point(scalar(1.0), -0.25, 0.5);
  AbstractState x{VectorXd::Zero(1), Segment(1, 0.5, [](double xi) {
                    return VectorXd::Constant(1, xi == -0.25 ? std::nan("") : 1.0);
                  })};
  EXPECT_THROW(apply_Bstar(x, s), DomainError);
}

GTEST_TEST(LiftInitial, ZeroHistory) {
  ProblemSpec s = base_spec(1, 1, 1.0);
  s.b1 = DelayMeasure::constant_density(scalar(1.0), 1.0);
  const AbstractState x = lift_initial(s);
  for (double xi : {-0.9, -0.5, 0.0}) EXPECT_EQ(x.x1(xi)(0), 0.0);
}

GTEST_TEST(LiftInitial, UnitDensityUnitHistory) {
  ProblemSpec s = base_spec(1, 1, 1.0);
  s.b1 = DelayMeasure::constant_density(scalar(1.0), 1.0);
  s.initial.u0 = constant_history(VectorXd::Ones(1));
  const AbstractState x = lift_initial(s);
  for (double xi : {-0.9, -0.5, -0.1, 0.0}) EXPECT_NEAR(x.x1(xi)(0), xi + 1.0, 1e-13);
}

GTEST_TEST(LiftInitial, AtomSubstitution) {
  ProblemSpec s = base_spec(1, 1, 1.0);
  s.b1 = DelayMeasure::point(scalar(2.0), -1.0, 1.0);
  s.initial.u0.value = [](double r) { return VectorXd::Constant(1, std::cos(r)); };
  const AbstractState x = lift_initial(s);
  for (double xi : {-1.0, -0.6, -0.2, 0.0}) {
    EXPECT_NEAR(x.x1(xi)(0), 2.0 * std::cos(-1.0 - xi), 1e-14);
  }
}

GTEST_TEST(LiftInitial, UndefinedHistoryThrows) {
  ProblemSpec s = base_spec(1, 1, 1.0);
  s.b1 = DelayMeasure::point(scalar(1.0), -1.0, 1.0);
  s.initial.u0.value = [](double r) -> VectorXd {
    if (r < -0.5) throw DomainError("model", "history undefined");
    return VectorXd::Zero(1);
  };
  const AbstractState x = lift_initial(s);
  EXPECT_THROW(x.x1(-0.2), DomainError);
}

}  // namespace
}  // namespace delayctl
