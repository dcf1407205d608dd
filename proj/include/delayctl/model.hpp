#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace delayctl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Atom {
  double location = 0.0;  // xi_j in [-d, 0]
  MatrixXd weight;        // n x m
};

/// b1(dxi) = density(xi) dxi + sum_j c_j delta_{xi_j}.
/// The density is either piecewise constant on `knots` (values[i] on
/// [knots[i], knots[i+1])) or sampled at `knots` with linear interpolation.
class DelayMeasure {
 public:
  enum class DensityKind { kNone, kPiecewiseConstant, kSampled };

  DelayMeasure() = default;
  DelayMeasure(int n, int m, double d);

  static DelayMeasure zero(int n, int m, double d);
  static DelayMeasure piecewise_constant(std::vector<double> knots, std::vector<MatrixXd> values);
  static DelayMeasure sampled(std::vector<double> knots, std::vector<MatrixXd> values);
  static DelayMeasure constant_density(const MatrixXd& value, double d);
  static DelayMeasure point(const MatrixXd& weight, double location, double d);

  DelayMeasure& add_atom(double location, const MatrixXd& weight);

  int n() const { return n_; }
  int m() const { return m_; }
  double d() const { return d_; }
  DensityKind density_kind() const { return kind_; }
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<MatrixXd>& values() const { return values_; }
  const std::vector<Atom>& atoms() const { return atoms_; }
  bool has_density() const { return kind_ != DensityKind::kNone; }
  bool has_atoms() const { return !atoms_.empty(); }

  /// Density value (n x m) at xi; zero outside [-d, 0].
  MatrixXd density(double xi) const;
  /// Density knots and atom locations, sorted, inside [-d, 0].
  std::vector<double> breakpoints() const;
  /// b1([-d, 0]) as an n x m matrix.
  MatrixXd total_mass() const;
  /// Frobenius L2 norm of the density on [-d, 0].
  double density_l2_norm() const;
  /// Total variation (Frobenius norms of density plus atoms).
  double total_variation() const;

  /// Throws ValidationError when an invariant fails.
  void validate() const;

 private:
  int n_ = 0;
  int m_ = 0;
  double d_ = 0.0;
  DensityKind kind_ = DensityKind::kNone;
  std::vector<double> knots_;
  std::vector<MatrixXd> values_;
  std::vector<Atom> atoms_;
};

class ControlSet {
 public:
  enum class Kind { kBox, kFinite };

  static ControlSet box(VectorXd lo, VectorXd hi);
  static ControlSet finite(std::vector<VectorXd> points);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  const VectorXd& lo() const { return lo_; }
  const VectorXd& hi() const { return hi_; }
  const std::vector<VectorXd>& points() const { return points_; }
  bool compact() const;
  bool contains(const VectorXd& u, double tol = 1e-12) const;
  /// Nearest point of U (Euclidean).
  VectorXd project(const VectorXd& u) const;
  /// sup_{u in U} |u|; infinity when not compact.
  double max_norm() const;
  /// Deterministic sample of points of U (box: tensor grid clipped to
  /// [-clip, clip] on unbounded axes).
  std::vector<VectorXd> sample(int per_axis, double clip = 10.0) const;

 private:
  Kind kind_ = Kind::kBox;
  int dim_ = 0;
  VectorXd lo_, hi_;
  std::vector<VectorXd> points_;
};

/// l0(t, y). `bound` is the declared sup-norm bound, `growth_degree` the
/// declared polynomial growth when unbounded.
struct RunningCost {
  std::function<double(double, const VectorXd&)> value;
  std::function<VectorXd(double, const VectorXd&)> gradient;
  std::optional<double> bound;
  int growth_degree = 0;
  bool spatially_constant = false;
  bool is_zero = false;
  std::string description;
};

/// l1(u).
struct ControlCost {
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> gradient;
  double lower_bound = 0.0;
  /// l1(u) = 0.5 u^T Q u + c^T u + c0 when set.
  std::optional<MatrixXd> quadratic;
  std::optional<VectorXd> linear;
  double offset = 0.0;
  bool coercive = false;
  /// User certification that gamma is Lipschitz (required for feedback
  /// with non-quadratic costs).
  bool lipschitz_selection_certified = false;
  std::string description;
};

/// phi(y).
struct TerminalCost {
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> gradient;  // empty when not differentiable
  std::optional<double> bound;
  int growth_degree = 0;
  std::string description;
};

struct CostSpec {
  RunningCost running;
  ControlCost control;
  TerminalCost terminal;
};

/// Control history u0 on [-d, 0).
struct ControlHistory {
  std::function<VectorXd(double)> value;
  std::vector<double> breaks;
  std::string description;
};

struct InitialData {
  VectorXd y0;
  ControlHistory u0;
};

struct ProblemSpec {
  std::string name;
  int n = 1, m = 1, k = 1;
  MatrixXd a0, b0, sigma;
  DelayMeasure b1;
  double d = 1.0;
  double T = 1.0;
  ControlSet U = ControlSet::box(VectorXd::Constant(1, -1.0), VectorXd::Constant(1, 1.0));
  CostSpec cost;
  InitialData initial;

  /// Dimensional consistency, d > 0, T > 0, delay measure invariants.
  void validate() const;
};

// Cost builders used by the spec loader and the demos.
RunningCost zero_running_cost();
RunningCost constant_running_cost(double c);
ControlCost quadratic_control_cost(const MatrixXd& q, const VectorXd& c, double c0);
ControlCost linear_control_cost(const VectorXd& c);
ControlCost zero_control_cost(int m);
TerminalCost zero_terminal_cost();
/// (y - c)^T W (y - c); unbounded, growth degree 2.
TerminalCost quadratic_terminal_cost(const MatrixXd& w, const VectorXd& center);
/// depth * (1 - exp(-|y - c|^2 / (2 width^2))); bounded and smooth.
TerminalCost well_terminal_cost(const VectorXd& center, double width, double depth);
RunningCost quadratic_running_cost(const MatrixXd& w, const VectorXd& center);
RunningCost well_running_cost(const VectorXd& center, double width, double depth);
ControlHistory constant_history(const VectorXd& u);
ControlHistory sampled_history(double d, const MatrixXd& samples);

}  // namespace delayctl
