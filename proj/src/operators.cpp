#include "delayctl/operators.hpp"

#include <algorithm>
#include <cmath>

#include "delayctl/errors.hpp"
#include "delayctl/linalg.hpp"
#include "delayctl/quadrature.hpp"

namespace delayctl {

namespace {

void require_time(double t, const char* what) {
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw DomainError("operator_core", std::string(what) + ": time must be finite and >= 0");
  }
}

// e^{s a0} v without forming the exponential when a0 = 0.
VectorXd exp_apply(double s, const MatrixXd& a0, const VectorXd& v) {
  if (a0.isZero(0.0)) return v;
  return mat_exp(s, a0) * v;
}

}  // namespace

AbstractState zero_state(int n, double d) { return {VectorXd::Zero(n), Segment::zero(n, d)}; }

VectorXd reduced_coordinate(double t, const AbstractState& x, const MatrixXd& a0) {
  require_time(t, "reduced_coordinate");
  VectorXd out = exp_apply(t, a0, x.x0);
  if (x.x1.is_zero() || t == 0.0) return out;
  const double d = x.x1.d();
  const double lo = -std::min(t, d);
  out += integrate_adaptive([&](double s) { return exp_apply(t + s, a0, x.x1(s)); }, lo, 0.0,
                            x.x1.breaks(), 1e-12, 1e-15);
  return out;
}

AbstractState apply_semigroup(double t, const AbstractState& x, const MatrixXd& a0) {
  AbstractState out;
  out.x0 = reduced_coordinate(t, x, a0);
  const double d = x.x1.d();
  if (x.x1.is_zero() || t >= d) {
    out.x1 = Segment::zero(x.x1.dim(), d);
    return out;
  }
  if (t == 0.0) {
    out.x1 = x.x1;
    return out;
  }
  Segment src = x.x1;
  std::vector<double> br{-d + t};
  for (double b : src.breaks()) br.push_back(b + t);
  out.x1 = Segment(
      src.dim(), d,
      [src, t, d](double xi) -> VectorXd {
        if (xi < -d + t) return VectorXd::Zero(src.dim());
        return src(xi - t);
      },
      br);
  return out;
}

AdjointVector apply_adjoint_semigroup(double t, const AdjointVector& z, const MatrixXd& a0) {
  require_time(t, "apply_adjoint_semigroup");
  if (t == 0.0) return z;
  const double d = z.z1.d();
  const int n = static_cast<int>(z.z0.size());
  AdjointVector out;
  out.z0 = exp_apply(t, a0.transpose(), z.z0);
  const MatrixXd a0t = a0.transpose();
  const VectorXd z0 = z.z0;
  const Segment z1 = z.z1;
  std::vector<double> br{-t};
  for (double b : z1.breaks()) br.push_back(b - t);
  out.z1 = Segment(
      n, d,
      [a0t, z0, z1, t](double xi) -> VectorXd {
        if (xi >= -t) return exp_apply(xi + t, a0t, z0);
        return z1(xi + t);
      },
      br);
  return out;
}

AbstractState apply_resolvent(double N, const AbstractState& x, const MatrixXd& a0) {
  const auto n = a0.rows();
  const MatrixXd shifted = N * MatrixXd::Identity(n, n) - a0;
  Eigen::FullPivLU<MatrixXd> lu(shifted);
  if (!lu.isInvertible() || op_norm(shifted.inverse()) > 1e14) {
    throw NumericError("operator_core", "resolvent: N is an eigenvalue of a0");
  }
  const double d = x.x1.d();
  VectorXd rhs = x.x0;
  if (!x.x1.is_zero()) {
    rhs += integrate_adaptive([&](double s) { return (std::exp(N * s) * x.x1(s)).eval(); }, -d, 0.0,
                              x.x1.breaks(), 1e-12, 1e-15);
  }
  AbstractState out;
  out.x0 = lu.solve(rhs);
  if (x.x1.is_zero()) {
    out.x1 = Segment::zero(x.x1.dim(), d);
    return out;
  }
  const Segment src = x.x1;
  out.x1 = Segment(
      src.dim(), d,
      [src, N, d](double xi) -> VectorXd {
        if (xi <= -d) return VectorXd::Zero(src.dim());
        return integrate_adaptive([&](double s) { return (std::exp(N * (s - xi)) * src(s)).eval(); }, -d,
                                  xi, src.breaks(), 1e-12, 1e-15);
      },
      src.breaks());
  return out;
}

AbstractState apply_generator(const AbstractState& x, const MatrixXd& a0, double h) {
  AbstractState out;
  out.x0 = a0 * x.x0 + x.x1(0.0);
  const Segment src = x.x1;
  const double d = src.d();
  out.x1 = Segment(
      src.dim(), d,
      [src, h, d](double xi) -> VectorXd {
        double lo = xi - h, hi = xi + h;
        if (lo < -d) lo = -d;
        if (hi > 0.0) hi = 0.0;
        return (-(src(hi) - src(lo)) / (hi - lo)).eval();
      },
      src.breaks());
  return out;
}

MatrixXd etAB0(double t, const ProblemSpec& spec, bool include_boundary) {
  require_time(t, "etAB0");
  MatrixXd out = mat_exp(t, spec.a0) * spec.b0;
  const DelayMeasure& b1 = spec.b1;
  if (b1.has_density() && t > 0.0) {
    const double lo = -std::min(t, spec.d);
    const auto& knots = b1.knots();
    if (spec.a0.isZero(0.0) && b1.density_kind() == DelayMeasure::DensityKind::kPiecewiseConstant) {
      for (std::size_t i = 0; i + 1 < knots.size(); ++i) {
        const double a = std::max(knots[i], lo), b = knots[i + 1];
        if (b > a) out += (b - a) * b1.values()[i];
      }
    } else {
      const auto n = spec.n, m = spec.m;
      VectorXd flat = integrate_adaptive(
          [&](double r) {
            const MatrixXd v = mat_exp(t + r, spec.a0) * b1.density(r);
            return Eigen::Map<const VectorXd>(v.data(), v.size()).eval();
          },
          lo, 0.0, knots, 1e-12, 1e-15);
      out += Eigen::Map<const MatrixXd>(flat.data(), n, m);
    }
  }
  for (const auto& atom : b1.atoms()) {
    const bool active = include_boundary ? atom.location >= -t : atom.location > -t;
    if (active) out += mat_exp(t + atom.location, spec.a0) * atom.weight;
  }
  return out;
}

std::vector<double> atom_activation_times(const ProblemSpec& spec) {
  std::vector<double> out;
  for (const auto& atom : spec.b1.atoms()) {
    const double s = -atom.location;
    if (s > 0.0 && s < spec.T) out.push_back(s);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

MeasureImage apply_B(const VectorXd& u, const ProblemSpec& spec) {
  if (u.size() != spec.m) throw ValidationError("operator_core", "apply_B: u must have m entries");
  MeasureImage out;
  out.v0 = spec.b0 * u;
  const DelayMeasure b1 = spec.b1;
  if (b1.has_density() && !u.isZero(0.0)) {
    out.density = Segment(spec.n, spec.d, [b1, u](double xi) { return (b1.density(xi) * u).eval(); },
                          b1.knots());
  } else {
    out.density = Segment::zero(spec.n, spec.d);
  }
  for (const auto& atom : b1.atoms()) out.atoms.emplace_back(atom.location, atom.weight * u);
  return out;
}

VectorXd apply_Bstar(const AbstractState& x, const ProblemSpec& spec) {
  VectorXd out = spec.b0.transpose() * x.x0;
  const DelayMeasure& b1 = spec.b1;
  if (b1.has_density() && !x.x1.is_zero()) {
    const auto br = merge_breaks(-spec.d, 0.0, {&b1.knots(), &x.x1.breaks()});
    out += integrate_adaptive([&](double xi) { return (b1.density(xi).transpose() * x.x1(xi)).eval(); },
                              -spec.d, 0.0, br, 1e-12, 1e-15);
  }
  for (const auto& atom : b1.atoms()) {
    const VectorXd v = x.x1(atom.location);
    if (!v.allFinite()) {
      throw DomainError("operator_core", "apply_Bstar: history not evaluable at an atom location");
    }
    out += atom.weight.transpose() * v;
  }
  return out;
}

double pair_B(const MeasureImage& bu, const AbstractState& x) {
  double acc = bu.v0.dot(x.x0);
  if (!bu.density.is_zero() && !x.x1.is_zero()) {
    const double d = x.x1.d();
    const auto br = merge_breaks(-d, 0.0, {&bu.density.breaks(), &x.x1.breaks()});
    acc += integrate_adaptive_scalar([&](double xi) { return bu.density(xi).dot(x.x1(xi)); }, -d, 0.0, br,
                                     1e-12, 1e-15);
  }
  for (const auto& [loc, v] : bu.atoms) acc += v.dot(x.x1(loc));
  return acc;
}

namespace {

double segment_inner(const Segment& a, const Segment& b) {
  if (a.is_zero() || b.is_zero()) return 0.0;
  const double d = a.d();
  const auto br = merge_breaks(-d, 0.0, {&a.breaks(), &b.breaks()});
  return integrate_adaptive_scalar([&](double xi) { return a(xi).dot(b(xi)); }, -d, 0.0, br, 1e-12, 1e-15);
}

}  // namespace

double inner(const AbstractState& x, const AbstractState& z) {
  return x.x0.dot(z.x0) + segment_inner(x.x1, z.x1);
}

double inner(const AbstractState& x, const AdjointVector& z) {
  return x.x0.dot(z.z0) + segment_inner(x.x1, z.z1);
}

AbstractState lift_initial(const ProblemSpec& spec) {
  const int n = spec.n;
  const double d = spec.d;
  AbstractState out;
  out.x0 = spec.initial.y0;
  const DelayMeasure b1 = spec.b1;
  if (!b1.has_density() && !b1.has_atoms()) {
    out.x1 = Segment::zero(n, d);
    return out;
  }
  const ControlHistory u0 = spec.initial.u0;
  auto fn = [b1, u0, d, n](double xi) -> VectorXd {
    VectorXd acc = VectorXd::Zero(n);
    if (b1.has_density() && xi > -d) {
      // zeta - xi runs over the history; u0 kinks at zeta = b + xi.
      std::vector<double> br = b1.knots();
      for (double b : u0.breaks) br.push_back(b + xi);
      acc += integrate_adaptive([&](double zeta) { return (b1.density(zeta) * u0.value(zeta - xi)).eval(); },
                                -d, xi, br, 1e-12, 1e-15);
    }
    for (const auto& atom : b1.atoms()) {
      if (atom.location <= xi) acc += atom.weight * u0.value(atom.location - xi);
    }
    return acc;
  };
  std::vector<double> br;
  for (const auto& atom : b1.atoms()) br.push_back(atom.location);
  for (double b : b1.knots()) br.push_back(b);
  out.x1 = Segment(n, d, fn, br);
  return out;
}

}  // namespace delayctl
