#pragma once

#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "delayctl/model.hpp"
#include "delayctl/segment.hpp"

namespace delayctl {

/// Point of H = R^n x L^2([-d, 0]; R^n).
struct AbstractState {
  VectorXd x0;
  Segment x1;
};

struct AdjointVector {
  VectorXd z0;
  Segment z1;
};

/// Bu = (b0 u, b1(.) u): density part as a segment, atoms as point masses.
struct MeasureImage {
  VectorXd v0;
  Segment density;
  std::vector<std::pair<double, VectorXd>> atoms;
};

AbstractState zero_state(int n, double d);

/// e^{tA} x.
AbstractState apply_semigroup(double t, const AbstractState& x, const MatrixXd& a0);

/// (e^{tA} x)_0 = e^{t a0} x0 + int_{-min(t,d)}^0 e^{(t+s) a0} x1(s) ds.
VectorXd reduced_coordinate(double t, const AbstractState& x, const MatrixXd& a0);

/// e^{tA*} z.
AdjointVector apply_adjoint_semigroup(double t, const AdjointVector& z, const MatrixXd& a0);

/// (N - A)^{-1} x. Throws NumericError when N - a0 is singular.
AbstractState apply_resolvent(double N, const AbstractState& x, const MatrixXd& a0);

/// A x with the derivative of x1 taken by centered differences of step h.
/// Only meaningful for x in D(A) (x1 differentiable, x1(-d) = 0).
AbstractState apply_generator(const AbstractState& x, const MatrixXd& a0, double h = 1e-5);

/// (e^{tA} B)_0 as an n x m matrix. Atoms with xi_j >= -t are active; with
/// `include_boundary` false an atom exactly at xi_j = -t is left out (the
/// left limit in t).
MatrixXd etAB0(double t, const ProblemSpec& spec, bool include_boundary = true);

/// Times in (0, T) where an atom becomes active, i.e. -xi_j.
std::vector<double> atom_activation_times(const ProblemSpec& spec);

MeasureImage apply_B(const VectorXd& u, const ProblemSpec& spec);

/// B* x = b0^T x0 + int b1(dxi)^T x1(xi). x1 must be finite at atom locations.
VectorXd apply_Bstar(const AbstractState& x, const ProblemSpec& spec);

/// <Bu, x> computed from the measure image.
double pair_B(const MeasureImage& bu, const AbstractState& x);

/// <x, z>_H.
double inner(const AbstractState& x, const AbstractState& z);
double inner(const AbstractState& x, const AdjointVector& z);

/// Lifted initial datum: x1(xi) = int_{-d}^{xi} b1(dzeta) u0(zeta - xi).
AbstractState lift_initial(const ProblemSpec& spec);

}  // namespace delayctl
