#include "delayctl/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "delayctl/errors.hpp"
#include "delayctl/operators.hpp"

namespace delayctl {

namespace {

VectorXd flatten(const MatrixXd& a) { return Eigen::Map<const VectorXd>(a.data(), a.size()); }

MatrixXd unflatten(const VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const MatrixXd>(v.data(), rows, cols);
}

int numeric_rank(const MatrixXd& a, double rel_tol = 1e-10) {
  if (a.size() == 0) return 0;
  Eigen::JacobiSVD<MatrixXd> svd(a);
  const VectorXd& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) return 0;
  int r = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i) r += sv(i) > rel_tol * sv(0) ? 1 : 0;
  return r;
}

}  // namespace

MatrixXd gramian(double t, const MatrixXd& a0, const MatrixXd& sigma, double rel_tol) {
  const auto n = a0.rows();
  if (t < 0.0) throw DomainError("gaussian", "compute_Q0: t must be >= 0");
  if (t == 0.0) return MatrixXd::Zero(n, n);
  const MatrixXd ss = sigma * sigma.transpose();
  if (a0.isZero(0.0)) return t * ss;
  const VectorXd flat = integrate_adaptive(
      [&](double s) {
        const MatrixXd e = mat_exp(s, a0);
        return flatten(e * ss * e.transpose());
      },
      0.0, t, {}, rel_tol, 1e-300);
  MatrixXd q = unflatten(flat, n, n);
  return 0.5 * (q + q.transpose());
}

double GaussKernel::expect(const std::function<double(const VectorXd&)>& g) const {
  double acc = 0.0;
  for (Eigen::Index j = 0; j < nodes.cols(); ++j) acc += rule.weights(j) * g(nodes.col(j));
  return acc;
}

GaussKernel make_kernel(double t, const MatrixXd& cov, const QuadratureSpec& quad) {
  GaussKernel k;
  k.t = t;
  k.Q0 = 0.5 * (cov + cov.transpose());
  k.factor = psd_factor(k.Q0);
  k.quad = quad;
  k.rule = make_normal_rule(static_cast<int>(cov.rows()), quad);
  k.nodes = k.factor.sqrt * k.rule.points;
  return k;
}

GaussKernel compute_Q0(double t, const ProblemSpec& spec, const QuadratureSpec& quad) {
  return make_kernel(t, gramian(t, spec.a0, spec.sigma), quad);
}

std::vector<double> rate_fit_times() {
  std::vector<double> ts(20);
  for (int i = 0; i < 20; ++i) ts[i] = std::pow(10.0, -3.0 + 2.0 * i / 19.0);
  return ts;
}

double loglog_slope(const std::vector<double>& ts, const std::vector<double>& values) {
  const auto n = ts.size();
  if (n < 2 || values.size() != n) throw ValidationError("gaussian", "slope fit needs matching samples");
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(ts[i]), y = std::log(values[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double dn = static_cast<double>(n);
  return (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
}

KalmanReport kalman(const ProblemSpec& spec) {
  KalmanReport rep;
  const int n = spec.n;
  MatrixXd blocks(n, 0);
  MatrixXd power = spec.sigma;
  for (int j = 0; j < n; ++j) {
    MatrixXd next(n, blocks.cols() + power.cols());
    next << blocks, power;
    blocks = next;
    const int rk = numeric_rank(blocks);
    rep.rank = rk;
    if (rk == n && !rep.r) rep.r = j;
    power = spec.a0 * power;
  }
  rep.controllable = rep.r.has_value();
  if (!rep.controllable) {
    rep.fitted_slope = std::numeric_limits<double>::quiet_NaN();
    return rep;
  }
  const auto ts = rate_fit_times();
  std::vector<double> norms;
  for (double t : ts) {
    const PsdFactor f = psd_factor(gramian(t, spec.a0, spec.sigma));
    norms.push_back(op_norm(f.pinv_sqrt));
  }
  rep.fitted_slope = loglog_slope(ts, norms);
  return rep;
}

const char* to_string(ImageCondition c) {
  switch (c) {
    case ImageCondition::kHpdebreg: return "hpdebreg";
    case ImageCondition::kHpdebregbis: return "hpdebregbis";
    case ImageCondition::kFails: return "fails";
  }
  return "unknown";
}

ImageReport check_image_conditions(const ProblemSpec& spec, int grid_points) {
  ImageReport rep;
  const MatrixXd& sigma = spec.sigma;
  // Strong condition: Krylov test for e^{t a0} b0, pointwise test for the density.
  double strong = 0.0;
  MatrixXd power = spec.b0;
  for (int j = 0; j < spec.n; ++j) {
    strong = std::max(strong, range_residual(sigma, power));
    power = spec.a0 * power;
  }
  for (const auto& v : spec.b1.values()) strong = std::max(strong, range_residual(sigma, v));
  // Atom weights count like density values here.
  for (const auto& a : spec.b1.atoms()) strong = std::max(strong, range_residual(sigma, a.weight));
  if (strong <= kImageTol) {
    rep.condition = ImageCondition::kHpdebreg;
    rep.residual = strong;
    rep.detail = "Im e^{t a0} b0 and Im b1 lie in Im sigma";
    return rep;
  }
  // Weak condition on a grid, including both one-sided limits at atom activation times.
  std::vector<double> ts{1e-6, 1e-3};
  for (int i = 1; i <= grid_points; ++i) ts.push_back(spec.T * i / grid_points);
  double weak = 0.0;
  for (double t : ts) weak = std::max(weak, range_residual(sigma, etAB0(t, spec)));
  for (double t : atom_activation_times(spec)) {
    weak = std::max(weak, range_residual(sigma, etAB0(t, spec, false)));
    weak = std::max(weak, range_residual(sigma, etAB0(t, spec, true)));
  }
  std::ostringstream msg;
  if (weak <= kImageTol) {
    rep.condition = ImageCondition::kHpdebregbis;
    rep.residual = weak;
    msg << "Im (e^{tA}B)_0 in Im sigma on the t-grid (strong condition residual " << strong << ")";
  } else {
    rep.condition = ImageCondition::kFails;
    rep.residual = weak;
    msg << "Im (e^{tA}B)_0 leaves Im sigma: residual " << weak;
  }
  rep.detail = msg.str();
  return rep;
}

double smooth_apply(const GaussKernel& kernel, const ScalarField& phi, const VectorXd& y) {
  if (kernel.t == 0.0 || kernel.factor.rank == 0) return phi(y);
  double acc = 0.0;
  for (Eigen::Index j = 0; j < kernel.nodes.cols(); ++j) {
    acc += kernel.rule.weights(j) * phi(y + kernel.nodes.col(j));
  }
  return acc;
}

void require_in_range(const GaussKernel& kernel, const MatrixXd& D, const char* what) {
  const MatrixXd& p = kernel.factor.projector;
  const double res = (D - p * D).norm() / std::max(1.0, D.norm());
  if (!(res <= kImageTol)) {
    std::ostringstream msg;
    msg << what << ": (e^{tA}B)_0 not in Im Q_t^0 (residual " << res << ")";
    throw SmoothingUnavailable("gaussian", msg.str());
  }
}

VectorXd smooth_grad_B(const GaussKernel& kernel, const ScalarField& phi, const VectorXd& y,
                       const MatrixXd& D) {
  if (kernel.t <= 0.0) throw DomainError("gaussian", "smooth_grad_B needs t > 0");
  require_in_range(kernel, D, "smooth_grad_B");
  // <Q^{-1/2} D k, Q^{-1/2} z_j> = k^T (pinv_sqrt D)^T xi_j since z_j = sqrt(Q) xi_j.
  VectorXd acc = VectorXd::Zero(kernel.rule.points.rows());
  for (Eigen::Index j = 0; j < kernel.nodes.cols(); ++j) {
    acc += kernel.rule.weights(j) * phi(y + kernel.nodes.col(j)) * kernel.rule.points.col(j);
  }
  return (kernel.factor.pinv_sqrt * D).transpose() * acc;
}

VectorXd smooth_grad_B(const GaussKernel& kernel, const ScalarField& phi, const VectorXd& y,
                       const ProblemSpec& spec) {
  return smooth_grad_B(kernel, phi, y, etAB0(kernel.t, spec));
}

namespace {

void require_invertible(const GaussKernel& kernel, const char* what) {
  if (kernel.factor.rank < kernel.Q0.rows()) {
    throw SmoothingUnavailable("gaussian", std::string(what) + ": Q_t^0 is singular");
  }
}

}  // namespace

VectorXd smooth_grad_full(const GaussKernel& kernel, const ScalarField& phi, const VectorXd& y) {
  if (kernel.t <= 0.0) throw DomainError("gaussian", "smooth_grad_full needs t > 0");
  require_invertible(kernel, "smooth_grad_full");
  VectorXd acc = VectorXd::Zero(kernel.rule.points.rows());
  for (Eigen::Index j = 0; j < kernel.nodes.cols(); ++j) {
    acc += kernel.rule.weights(j) * phi(y + kernel.nodes.col(j)) * kernel.rule.points.col(j);
  }
  // Q^{-1} z_j = pinv_sqrt xi_j.
  return kernel.factor.pinv_sqrt * acc;
}

MatrixXd smooth_hess_B(const GaussKernel& kernel, const VectorField& phi_grad, const VectorXd& y,
                       const MatrixXd& D, HessOrdering ordering) {
  if (kernel.t <= 0.0) throw DomainError("gaussian", "smooth_hess_B needs t > 0");
  require_in_range(kernel, D, "smooth_hess_B");
  const auto n = kernel.Q0.rows();
  if (ordering == HessOrdering::kSecondKernel) {
    throw ValidationError("gaussian", "kSecondKernel takes phi itself, use smooth_hess_B_kernel");
  }
  // E[grad phi(z + y) xi^T], an n x n matrix.
  MatrixXd m = MatrixXd::Zero(n, n);
  for (Eigen::Index j = 0; j < kernel.nodes.cols(); ++j) {
    m += kernel.rule.weights(j) * phi_grad(y + kernel.nodes.col(j)) * kernel.rule.points.col(j).transpose();
  }
  if (ordering == HessOrdering::kGradOfBGrad) {
    // E[grad phi z^T] Q^+ D = E[grad phi xi^T] pinv_sqrt D.
    return m * kernel.factor.pinv_sqrt * D;
  }
  require_invertible(kernel, "smooth_hess_B");
  // Q^{-1} E[z grad phi^T] D = pinv_sqrt E[xi grad phi^T] D.
  return kernel.factor.pinv_sqrt * m.transpose() * D;
}

MatrixXd smooth_hess_B_kernel(const GaussKernel& kernel, const ScalarField& phi, const VectorXd& y,
                              const MatrixXd& D) {
  if (kernel.t <= 0.0) throw DomainError("gaussian", "smooth_hess_B needs t > 0");
  require_invertible(kernel, "smooth_hess_B");
  const auto n = kernel.Q0.rows();
  // E[phi (Q^{-1} z z^T Q^{-1} - Q^{-1})] = pinv_sqrt E[phi (xi xi^T - I)] pinv_sqrt.
  MatrixXd m = MatrixXd::Zero(n, n);
  const MatrixXd eye = MatrixXd::Identity(n, n);
  for (Eigen::Index j = 0; j < kernel.nodes.cols(); ++j) {
    const auto xi = kernel.rule.points.col(j);
    m += kernel.rule.weights(j) * phi(y + kernel.nodes.col(j)) * (xi * xi.transpose() - eye);
  }
  return kernel.factor.pinv_sqrt * m * kernel.factor.pinv_sqrt * D;
}

EnergyBound min_energy_bound(double t, const ProblemSpec& spec) {
  if (t <= 0.0) throw DomainError("gaussian", "min_energy_bound needs t > 0");
  EnergyBound out;
  const MatrixXd D = etAB0(t, spec);
  const GaussKernel kernel = make_kernel(t, gramian(t, spec.a0, spec.sigma),
                                         QuadratureSpec{QuadratureSpec::Kind::kGaussHermite, 1});
  const ImageReport img = check_image_conditions(spec);
  if (img.condition == ImageCondition::kFails) {
    throw SmoothingUnavailable("gaussian", "min_energy_bound: " + img.detail);
  }
  require_in_range(kernel, D, "min_energy_bound");
  out.op_norm = op_norm(kernel.factor.pinv_sqrt * D);
  const auto m = spec.m;
  const Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(spec.sigma);
  const MatrixXd sigma_pinv = cod.pseudoInverse();
  std::function<MatrixXd(double)> control;
  std::vector<double> breaks;
  // The explicit control under the strong condition is built from the
  // density; an atom has no such representation.
  if (img.condition == ImageCondition::kHpdebreg && !spec.b1.has_atoms()) {
    out.control = "control";
    control = [&](double s) -> MatrixXd {
      MatrixXd u = -(1.0 / t) * sigma_pinv * mat_exp(s, spec.a0) * spec.b0;
      if (s <= spec.d) u -= sigma_pinv * spec.b1.density(-s);
      return u;
    };
    for (double b : spec.b1.knots()) breaks.push_back(-b);
  } else {
    out.control = "controlbis";
    const MatrixXd qd = kernel.factor.pinv * D;
    control = [&, qd](double s) -> MatrixXd {
      return -spec.sigma.transpose() * mat_exp(t - s, spec.a0.transpose()) * qd;
    };
  }
  const VectorXd flat = integrate_adaptive(
      [&](double s) {
        const MatrixXd u = control(s);
        return flatten(u.transpose() * u);
      },
      0.0, t, breaks, 1e-12, 1e-300);
  const MatrixXd energy = unflatten(flat, m, m);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (energy + energy.transpose()));
  out.explicit_energy = std::max(0.0, es.eigenvalues().maxCoeff());
  return out;
}

double cameron_martin_density(const GaussKernel& kernel, const VectorXd& shift, const VectorXd& z) {
  require_in_range(kernel, shift, "cameron_martin_density");
  const VectorXd a = kernel.factor.pinv_sqrt * shift;
  const VectorXd b = kernel.factor.pinv_sqrt * z;
  return std::exp(a.dot(b) - 0.5 * a.squaredNorm());
}

}  // namespace delayctl
