#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "delayctl/gaussian.hpp"
#include "delayctl/hamiltonian.hpp"
#include "delayctl/model.hpp"
#include "delayctl/operators.hpp"

namespace delayctl {

/// Discretization of the reduced problem. Zero means "pick by dimension".
struct GridConfig {
  int nodes = 0;           // per axis: 161 / 31 / 13 for n = 1 / 2 / 3
  std::optional<VectorXd> lo, hi;
  int time_steps = 40;     // t_i = T (i/K)^grading, plus atom activation times
  double time_grading = 1.5;
  int theta_order = 0;     // Gauss-Legendre nodes of the singular time rule: 24 / 16 / 12
  int quad_order = 0;      // Gauss-Hermite nodes per axis: 20 / 8 / 5
};

struct SolveOptions {
  double tol = 1e-10;
  int max_iter = 60;
  std::optional<double> eta;   // exponential weight; default from the a-priori factor
  double target_factor = 0.5;  // a-priori contraction estimate the default eta must reach
  int stall_window = 3;        // consecutive ratios >= 1 before eta is raised
  double eta_max = 4096.0;
};

/// The pair (f, fbar) on [0, T] x grid. fbar(t, y) = t^{1/2} grad^B w(t, x)
/// at any x with (e^{tA} x)_0 = y. At an atom activation time the time grid
/// holds two nodes: the left limit and the value (closed-interval convention).
class ReducedValueField {
 public:
  int n = 1, m = 1;
  double T = 1.0;
  VectorXd lo, hi;
  int nodes_per_axis = 0;
  std::vector<double> times;
  std::vector<char> left_limit;  // 1 for the left-limit copy of an activation time
  std::vector<VectorXd> f;       // per time node, one entry per spatial node
  std::vector<MatrixXd> fbar;    // per time node, m x nodes
  GridConfig config;
  bool running_pullback_exact = true;  // l0 spatially constant

  int node_count() const;
  VectorXd node(int j) const;
  double step(int axis) const { return (hi(axis) - lo(axis)) / (nodes_per_axis - 1); }

  /// Forward-time interpolation; y outside the box is clamped to it.
  double value(double t, const VectorXd& y) const;
  VectorXd bgrad(double t, const VectorXd& y) const;
  /// d fbar / dy, m x n.
  MatrixXd bgrad_jacobian(double t, const VectorXd& y) const;

  /// Bracket (a, b) with t in [times[a], times[b]] plus a cubic stencil of up
  /// to four slices that never crosses an activation jump. f is interpolated
  /// in t, fbar in sqrt(t) (fbar vanishes like sqrt(t) at 0).
  struct TimeLookup {
    int a = 0, b = 0;
    double lambda_sqrt = 0.0;  // weight of b, linear in sqrt(t)
    double lambda_lin = 0.0;   // weight of b, linear in t
    int count = 1;
    std::array<int, 4> idx{};
    std::array<double, 4> wf{1.0, 0.0, 0.0, 0.0};
    std::array<double, 4> wg{1.0, 0.0, 0.0, 0.0};
  };
  TimeLookup lookup(double t) const;
  /// Cubic Lagrange interpolation of slice data (rows x nodes) at y.
  VectorXd interp(const MatrixXd& slice, const VectorXd& y) const;
  MatrixXd interp_jacobian(const MatrixXd& slice, const VectorXd& y) const;
};

struct SolveReport {
  int iterations = 0;
  bool converged = false;
  double eta = 0.0;
  double eta_initial = 0.0;
  double apriori_factor = 0.0;  // estimate of the contraction factor at eta
  double lipschitz = 0.0;       // L used in the estimate
  double kernel_constant = 0.0; // sup (t - s)^{1/2} |Sigma^{-1/2} D|_F over the rule
  std::vector<double> distances;             // eta-weighted
  std::vector<double> distances_unweighted;
  std::vector<double> ratios;                // eta-weighted
  double mild_residual = 0.0;   // eta-weighted |C(f) - f| over the grid, one extra sweep
  double probe_residual = 0.0;  // max |C(f) - f| at off-grid probes (interpolation error)
  double probe_residual_grad = 0.0;
  double sup_f = 0.0;
  double data_sup = 0.0;        // |phi|_inf + |l0|_inf (inf when unbounded)
  double apriori_bound = 0.0;   // bound on sup |f| + sup |fbar| from the data alone
  double C_T = 0.0;             // apriori_bound / data_sup
  double seconds = 0.0;
  std::vector<std::string> notes;
};

struct SolveResult {
  ReducedValueField field;
  SolveReport report;
};

SolveResult picard_solve(const ProblemSpec& spec, const GridConfig& grid = {}, const SolveOptions& opts = {});

/// sup e^{-eta t} |f| + sup e^{-eta t} |fbar| over the grid.
double weighted_norm(const ReducedValueField& field, double eta);

/// v(t, x) = f(T - t, (e^{(T-t)A} x)_0). With `exact_running` the l0
/// convolution is recomputed along the exact curve tau -> (e^{tau A} x)_0
/// instead of the grid pullback.
double evaluate_v(const ProblemSpec& spec, const ReducedValueField& field, double t, const AbstractState& x,
                  bool exact_running = false);

/// grad^B v(t, x) = (T - t)^{-1/2} fbar(T - t, y). SingularityError at t = T.
VectorXd grad_B_v(const ProblemSpec& spec, const ReducedValueField& field, double t, const AbstractState& x);

/// Pullback minus exact l0 convolution at (t, x); zero when l0 is spatially
/// constant or x1 = 0.
struct RunningDiscrepancy {
  double pullback = 0.0;
  double exact = 0.0;
  double difference() const { return pullback - exact; }
};
RunningDiscrepancy running_discrepancy(const ProblemSpec& spec, const ReducedValueField& field, double t,
                                       const AbstractState& x);

/// Second derivative of v as n x m matrices M with form(h, k) = (e^{(T-t)A} h)_0^T M k,
/// assembled from the kernel formulas in both mixed orders. `quad_order`
/// overrides the Gauss-Hermite order of the field's grid config.
struct SecondDerivative {
  MatrixXd grad_of_bgrad;  // kernel on the k side
  MatrixXd bgrad_of_grad;  // kernel on the h side
  double asymmetry = 0.0;  // max entry difference
  bool terminal_differentiable = true;
  MatrixXd form() const { return 0.5 * (grad_of_bgrad + bgrad_of_grad); }
};
SecondDerivative grad_B_grad_v(const ProblemSpec& spec, const ReducedValueField& field, double t,
                               const AbstractState& x, int quad_order = 0);

/// Gaussian mollification phi_eps(y) = E[phi(y + eps xi)] by Gauss-Hermite.
ScalarField mollify(const ScalarField& phi, int n, double eps, int order = 20);

struct MollifiedLevel {
  double width = 0.0;
  SolveResult solve;
  double dist_value = 0.0;  // sup over the probe box of |w_n - w|
  double dist_grad = 0.0;   // same for t^{1/2} grad^B
  double sup_value = 0.0;   // sup |w_n|
};
struct MollifiedSequence {
  SolveResult base;
  std::vector<MollifiedLevel> levels;
  VectorXd box_lo, box_hi;
};

/// Solves the problem with data mollified at widths 2^{-1}, ..., 2^{-levels}
/// on the base grid and measures the distances to the base solution on the
/// probe box (default: middle half of the grid).
MollifiedSequence mollified_sequence(const ProblemSpec& spec, int levels, const GridConfig& grid = {},
                                     const SolveOptions& opts = {}, std::optional<VectorXd> box_lo = {},
                                     std::optional<VectorXd> box_hi = {});

/// Grid bounds used when GridConfig leaves them open.
std::pair<VectorXd, VectorXd> default_bounds(const ProblemSpec& spec);

}  // namespace delayctl
