#include "delayctl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/SVD>
#include <unsupported/Eigen/MatrixFunctions>

#include "delayctl/errors.hpp"

namespace delayctl {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kNumeric: return "numeric";
    case ErrorCode::kSmoothingUnavailable: return "smoothing_unavailable";
    case ErrorCode::kUnboundedHamiltonian: return "unbounded_hamiltonian";
    case ErrorCode::kNonContraction: return "non_contraction";
    case ErrorCode::kSingularity: return "singularity";
    case ErrorCode::kConfig: return "config";
  }
  return "unknown";
}

MatrixXd mat_exp(double t, const MatrixXd& a) {
  if (a.rows() != a.cols()) {
    throw ValidationError("operator_core", "mat_exp: matrix must be square");
  }
  if (t == 0.0 || a.size() == 0 || a.isZero(0.0)) {
    return MatrixXd::Identity(a.rows(), a.cols());
  }
  const MatrixXd ta = t * a;
  // Eigen's exp() is Higham's scaling-and-squaring with Pade approximants.
  MatrixXd result = ta.exp();
  if (!result.allFinite()) {
    std::ostringstream msg;
    msg << "mat_exp overflow: ||t a||_1 = " << ta.cwiseAbs().colwise().sum().maxCoeff();
    throw NumericError("operator_core", msg.str());
  }
  return result;
}

namespace {

// Graded covariances (e.g. short-time Gramians, eigenvalues ~ t and t^3) lose
// their small eigenvalues to round-off in a plain eigensolver. After diagonal
// balancing they are well conditioned; the Jacobi SVD of the scaled Cholesky
// factor then keeps the small singular values to high relative accuracy.
bool graded_factor(const MatrixXd& sym, double rel_cutoff, PsdFactor& out) {
  const Eigen::Index n = sym.rows();
  const VectorXd diag = sym.diagonal();
  if ((diag.array() <= 0.0).any()) return false;
  const VectorXd scale = diag.cwiseSqrt();
  const MatrixXd bal = scale.cwiseInverse().asDiagonal() * sym * scale.cwiseInverse().asDiagonal();
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(bal, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success || es.eigenvalues().minCoeff() <= rel_cutoff * es.eigenvalues().maxCoeff()) {
    return false;
  }
  Eigen::LLT<MatrixXd> llt(bal);
  if (llt.info() != Eigen::Success) return false;
  const MatrixXd L = scale.asDiagonal() * MatrixXd(llt.matrixL());
  Eigen::JacobiSVD<MatrixXd> svd(L, Eigen::ComputeFullU);
  const VectorXd sv = svd.singularValues();
  // Ascending order, like the eigensolver path.
  const MatrixXd U = svd.matrixU().rowwise().reverse();
  const VectorXd s = sv.reverse();
  out.sqrt = U * s.asDiagonal() * U.transpose();
  out.pinv_sqrt = U * s.cwiseInverse().asDiagonal() * U.transpose();
  out.pinv = U * s.cwiseAbs2().cwiseInverse().asDiagonal() * U.transpose();
  out.projector = MatrixXd::Identity(n, n);
  out.eigenvalues = s.cwiseAbs2();
  out.rank = static_cast<int>(n);
  return true;
}

}  // namespace

PsdFactor psd_factor(const MatrixXd& q, double rel_cutoff) {
  const Eigen::Index n = q.rows();
  PsdFactor out;
  if (n == 0) return out;
  const MatrixXd sym = 0.5 * (q + q.transpose());
  if (n > 1 && graded_factor(sym, rel_cutoff, out)) return out;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
  if (es.info() != Eigen::Success) {
    throw NumericError("gaussian", "eigendecomposition of covariance failed");
  }
  VectorXd lam = es.eigenvalues();
  const double lmax = std::max(0.0, lam.maxCoeff());
  const double cut = rel_cutoff * lmax;
  VectorXd root(n), inv_root(n), inv(n), proj(n);
  int rank = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (lmax > 0.0 && lam(i) > cut) {
      root(i) = std::sqrt(lam(i));
      inv_root(i) = 1.0 / root(i);
      inv(i) = 1.0 / lam(i);
      proj(i) = 1.0;
      ++rank;
    } else {
      lam(i) = 0.0;
      root(i) = inv_root(i) = inv(i) = proj(i) = 0.0;
    }
  }
  const MatrixXd& v = es.eigenvectors();
  out.sqrt = v * root.asDiagonal() * v.transpose();
  out.pinv_sqrt = v * inv_root.asDiagonal() * v.transpose();
  out.pinv = v * inv.asDiagonal() * v.transpose();
  out.projector = v * proj.asDiagonal() * v.transpose();
  out.eigenvalues = lam;
  out.rank = rank;
  return out;
}

double range_residual(const MatrixXd& basis, const MatrixXd& v) {
  if (v.size() == 0) return 0.0;
  const double vnorm = v.norm();
  if (basis.size() == 0 || basis.isZero(0.0)) {
    return vnorm / std::max(1.0, vnorm);
  }
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(basis);
  const MatrixXd coeff = cod.solve(v);
  const double res = (basis * coeff - v).norm();
  return res / std::max(1.0, vnorm);
}

double op_norm(const MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  Eigen::JacobiSVD<MatrixXd> svd(a);
  return svd.singularValues()(0);
}

}  // namespace delayctl
