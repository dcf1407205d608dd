#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace delayctl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// One-dimensional rule: sum_i weights[i] * f(nodes[i]).
struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre on [-1, 1] (Golub-Welsch).
Rule1D gauss_legendre(int order);

/// Gauss-Hermite for the standard normal: weights sum to one.
Rule1D gauss_hermite_normal(int order);

/// How Gaussian expectations over R^n are discretized.
struct QuadratureSpec {
  enum class Kind { kAuto, kGaussHermite, kQuasiMonteCarlo };
  Kind kind = Kind::kAuto;
  int order = 20;             // Gauss-Hermite nodes per axis
  int qmc_points = 1 << 14;   // Sobol points for the fallback
  std::uint64_t seed = 0;     // Cranley-Patterson shift for the Sobol points
  int max_tensor_dim = 3;     // kAuto switches to QMC above this dimension
};

/// Points xi_j in R^n and weights w_j with sum_j w_j g(xi_j) ~ E[g(xi)],
/// xi ~ N(0, I_n). Stored column-wise.
struct NormalRule {
  MatrixXd points;  // n x N
  VectorXd weights;
  bool tensor = true;
  int exactness_degree() const;  // polynomial degree integrated exactly (-1 for QMC)
  int order = 0;
};

NormalRule make_normal_rule(int dim, const QuadratureSpec& spec);

/// Nodes for int_0^t g(s) ds where g may carry s^{-1/2} and (t-s)^{-1/2}
/// endpoint singularities. Uses s = t sin^2(theta), which turns
/// s^{-1/2}(t-s)^{-1/2} ds into 2 dtheta, with Gauss-Legendre in theta.
/// `breaks` (absolute times inside (0, t)) split the theta range so
/// jump discontinuities of g fall on panel boundaries.
struct TimeRule {
  std::vector<double> s;
  std::vector<double> w;
};
TimeRule singular_time_rule(double t, int order, const std::vector<double>& breaks = {});

/// Adaptive Gauss-Kronrod (7/15) for vector-valued integrands.
/// Breakpoints inside (a, b) start separate panels.
VectorXd integrate_adaptive(const std::function<VectorXd(double)>& f, double a, double b,
                            const std::vector<double>& breaks = {}, double rel_tol = 1e-12,
                            double abs_tol = 1e-15, int max_depth = 40);

double integrate_adaptive_scalar(const std::function<double(double)>& f, double a, double b,
                                 const std::vector<double>& breaks = {}, double rel_tol = 1e-12,
                                 double abs_tol = 1e-15, int max_depth = 40);

}  // namespace delayctl
