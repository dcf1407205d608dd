#pragma once

#include <Eigen/Dense>

namespace delayctl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// e^{t a}. Throws NumericError when the result is not finite.
MatrixXd mat_exp(double t, const MatrixXd& a);

/// Symmetric positive semidefinite factorization with a relative eigenvalue
/// cutoff. Eigenvalues below `rel_cutoff * max_eigenvalue` (and small negative
/// round-off) are clipped to zero.
struct PsdFactor {
  MatrixXd sqrt;       // symmetric PSD square root
  MatrixXd pinv_sqrt;  // Moore-Penrose pseudo-inverse of `sqrt`
  MatrixXd pinv;       // pseudo-inverse of the matrix itself
  MatrixXd projector;  // orthogonal projector onto the range
  VectorXd eigenvalues;
  int rank = 0;
};

inline constexpr double kPsdRelCutoff = 1e-12;

PsdFactor psd_factor(const MatrixXd& q, double rel_cutoff = kPsdRelCutoff);

/// Relative residual of projecting the columns of `v` onto range(`basis`):
/// ||(I - P) v|| / max(1, ||v||).
double range_residual(const MatrixXd& basis, const MatrixXd& v);

/// Spectral norm.
double op_norm(const MatrixXd& a);

}  // namespace delayctl
