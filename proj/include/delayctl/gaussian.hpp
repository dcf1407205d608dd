#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "delayctl/linalg.hpp"
#include "delayctl/model.hpp"
#include "delayctl/quadrature.hpp"

namespace delayctl {

using ScalarField = std::function<double(const VectorXd&)>;
using VectorField = std::function<VectorXd(const VectorXd&)>;

/// int_0^t e^{s a} sigma sigma^T e^{s a^T} ds by adaptive Gauss-Kronrod.
MatrixXd gramian(double t, const MatrixXd& a0, const MatrixXd& sigma, double rel_tol = 1e-12);

/// N(0, cov) discretized: nodes z_j = sqrt(cov) xi_j with the weights of a
/// standard-normal rule. For the kernel formulas the whitened nodes xi_j are
/// kept as well, since Q^+ z_j = pinv_sqrt(cov) xi_j.
struct GaussKernel {
  double t = 0.0;
  MatrixXd Q0;
  PsdFactor factor;
  QuadratureSpec quad;
  NormalRule rule;
  MatrixXd nodes;  // n x N, sqrt(Q0) * rule.points

  int rank() const { return factor.rank; }
  const MatrixXd& sqrtQ0() const { return factor.sqrt; }
  const MatrixXd& pinv_sqrtQ0() const { return factor.pinv_sqrt; }
  /// Weighted Gaussian expectation of g(z).
  double expect(const std::function<double(const VectorXd&)>& g) const;
};

GaussKernel make_kernel(double t, const MatrixXd& cov, const QuadratureSpec& quad = {});
GaussKernel compute_Q0(double t, const ProblemSpec& spec, const QuadratureSpec& quad = {});

struct KalmanReport {
  bool controllable = false;
  std::optional<int> r;
  int rank = 0;
  /// log-log slope of ||(Q_t^0)^{-1/2}|| on [1e-3, 1e-1]; NaN if not controllable.
  double fitted_slope = 0.0;
};

/// Rank of [sigma, a0 sigma, ..., a0^{n-1} sigma] and the blow-up fit.
KalmanReport kalman(const ProblemSpec& spec);

/// Least-squares slope of log(values) against log(ts).
double loglog_slope(const std::vector<double>& ts, const std::vector<double>& values);

/// 20 log-spaced times in [1e-3, 1e-1].
std::vector<double> rate_fit_times();

enum class ImageCondition { kHpdebreg, kHpdebregbis, kFails };
const char* to_string(ImageCondition c);

struct ImageReport {
  ImageCondition condition = ImageCondition::kFails;
  double residual = 0.0;  // worst residual of the condition that decided the outcome
  std::string detail;
};

inline constexpr double kImageTol = 1e-9;

/// Decides between the two sufficient conditions for B-smoothing. The strong
/// one needs e^{t a0} b0 in Im sigma for all t (equivalently a0^j b0 in
/// Im sigma for j < n), a density with values in Im sigma, and no atoms. The
/// weak one is checked for (e^{tA}B)_0 on a t-grid over (0, T].
ImageReport check_image_conditions(const ProblemSpec& spec, int grid_points = 64);

/// E[phi(z + y)], z ~ N(0, Q0).
double smooth_apply(const GaussKernel& kernel, const ScalarField& phi, const VectorXd& y);

/// Residual of D against range(Q0); throws SmoothingUnavailable above kImageTol.
void require_in_range(const GaussKernel& kernel, const MatrixXd& D, const char* what);

/// B-gradient: k-pairing E[phi(z + y) <Q^{-1/2} D k, Q^{-1/2} z>] with
/// D = (e^{tA} B)_0 supplied by the caller.
VectorXd smooth_grad_B(const GaussKernel& kernel, const ScalarField& phi, const VectorXd& y,
                       const MatrixXd& D);
VectorXd smooth_grad_B(const GaussKernel& kernel, const ScalarField& phi, const VectorXd& y,
                       const ProblemSpec& spec);

/// g with <grad R_t[phi](x), h> = g^T (e^{tA} h)_0, i.e. g = E[phi(z + y) Q0^{-1} z].
VectorXd smooth_grad_full(const GaussKernel& kernel, const ScalarField& phi, const VectorXd& y);

/// Second derivative as an n x m matrix M with form(h, k) = (e^{tA} h)_0^T M k.
enum class HessOrdering {
  kGradOfBGrad,  // E[grad phi(z+y) z^T] Q^+ D  (Gaussian kernel on the k side)
  kBGradOfGrad,  // Q^{-1} E[z grad phi(z+y)^T] D  (kernel on the h side)
  kSecondKernel  // E[phi(z+y) (Q^{-1} z z^T Q^{-1} - Q^{-1})] D, phi only continuous
};
MatrixXd smooth_hess_B(const GaussKernel& kernel, const VectorField& phi_grad, const VectorXd& y,
                       const MatrixXd& D, HessOrdering ordering = HessOrdering::kGradOfBGrad);
MatrixXd smooth_hess_B_kernel(const GaussKernel& kernel, const ScalarField& phi, const VectorXd& y,
                              const MatrixXd& D);

struct EnergyBound {
  double op_norm = 0.0;          // ||Q^{-1/2} (e^{tA} B)_0||
  double explicit_energy = 0.0;  // sup_{|k|=1} int_0^t |u(s) k|^2 ds for the steering control
  std::string control;           // "control" or "controlbis"
};

/// Minimal steering energy and the energy of the explicit steering control.
EnergyBound min_energy_bound(double t, const ProblemSpec& spec);

/// dN(shift, Q)/dN(0, Q)(z). Throws SmoothingUnavailable if shift is not in range(Q).
double cameron_martin_density(const GaussKernel& kernel, const VectorXd& shift, const VectorXd& z);

}  // namespace delayctl
