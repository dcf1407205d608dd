#pragma once

#include <cstdint>
#include <utility>

#include <Eigen/Dense>

#include "delayctl/model.hpp"

namespace delayctl {

/// H_CV(p; u) = <p, u> + l1(u), H_min(p) = inf_U H_CV, gamma(p) a minimizer.
class Hamiltonian {
 public:
  enum class Method {
    kQuadraticClamp,       // diagonal quadratic l1 on a box: clamp(-Q^{-1}(p + c))
    kQuadraticCoordinate,  // general quadratic l1 on a box: projected coordinate descent
    kLinearBox,            // linear l1 on a box: bang-bang
    kFinite,               // finite U: enumeration
    kGolden,               // generic l1 on a box: golden-section sweeps
  };

  Hamiltonian(ControlSet U, ControlCost l1);

  double h_cv(const VectorXd& p, const VectorXd& u) const;
  double h_min(const VectorXd& p) const;
  VectorXd gamma(const VectorXd& p) const;
  /// (H_min(p), gamma(p)) in one pass.
  std::pair<double, VectorXd> minimize(const VectorXd& p) const;
  /// Same, writing gamma(p) into `u` (no allocation in the closed-form case).
  double minimize_into(const VectorXd& p, VectorXd& u) const;

  Method method() const { return method_; }
  const ControlSet& control_set() const { return U_; }
  const ControlCost& control_cost() const { return l1_; }
  int dim() const { return U_.dim(); }
  /// Closed-form quadratic family, a one-point U, or a user-certified selection.
  bool lipschitz_selection() const;

 private:
  std::pair<double, VectorXd> golden(const VectorXd& p) const;
  std::pair<double, VectorXd> golden_on(const VectorXd& p, const VectorXd& lo, const VectorXd& hi) const;

  ControlSet U_;
  ControlCost l1_;
  Method method_;
  VectorXd qdiag_;
};

const char* to_string(Hamiltonian::Method m);

struct LipschitzAudit {
  double L = 0.0;       // sampled Lipschitz constant of H_min
  double L_grad = 0.0;  // sampled Lipschitz constant of gamma = grad H_min
  double L_upper = 0.0; // sup_U |u| (infinite when U is not compact)
  int samples = 0;
};

/// Difference quotients over `samples` points of [-radius, radius]^m (a
/// uniform grid when m = 1, seeded uniform points with random unit
/// directions otherwise).
LipschitzAudit lipschitz_audit(const Hamiltonian& h, int samples = 1000, double radius = 10.0,
                               std::uint64_t seed = 0);

}  // namespace delayctl
