#include "delayctl/hamiltonian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "delayctl/errors.hpp"

namespace delayctl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

bool lex_less(const VectorXd& a, const VectorXd& b) {
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    if (a(i) != b(i)) return a(i) < b(i);
  }
  return false;
}

// Nearest point of [lo, hi] to zero.
double clamp_zero(double lo, double hi) { return std::clamp(0.0, lo, hi); }

}  // namespace

const char* to_string(Hamiltonian::Method m) {
  switch (m) {
    case Hamiltonian::Method::kQuadraticClamp: return "quadratic_clamp";
    case Hamiltonian::Method::kQuadraticCoordinate: return "quadratic_coordinate";
    case Hamiltonian::Method::kLinearBox: return "linear_box";
    case Hamiltonian::Method::kFinite: return "finite";
    case Hamiltonian::Method::kGolden: return "golden";
  }
  return "unknown";
}

Hamiltonian::Hamiltonian(ControlSet U, ControlCost l1) : U_(std::move(U)), l1_(std::move(l1)) {
  if (!l1_.value) throw ValidationError("hamiltonian", "control cost callable missing");
  const int m = U_.dim();
  if (U_.kind() == ControlSet::Kind::kFinite) {
    method_ = Method::kFinite;
    return;
  }
  if (l1_.quadratic) {
    const MatrixXd& q = *l1_.quadratic;
    if (q.rows() != m || q.cols() != m) throw ValidationError("hamiltonian", "quadratic cost must be m x m");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(q);
    if (es.eigenvalues().minCoeff() > 0.0) {
      const bool diagonal = (q - MatrixXd(q.diagonal().asDiagonal())).isZero(0.0);
      method_ = diagonal ? Method::kQuadraticClamp : Method::kQuadraticCoordinate;
      qdiag_ = q.diagonal();
      return;
    }
    if (!q.isZero(0.0)) {
      method_ = Method::kGolden;
      if (!U_.compact()) {
        throw UnboundedHamiltonian("quadratic control cost is not positive definite and U is unbounded");
      }
      return;
    }
  }
  if (l1_.linear && (!l1_.quadratic || l1_.quadratic->isZero(0.0))) {
    method_ = Method::kLinearBox;
    return;
  }
  method_ = Method::kGolden;
  if (!U_.compact() && !l1_.coercive) {
    throw UnboundedHamiltonian("U is unbounded and the control cost is not declared coercive");
  }
}

bool Hamiltonian::lipschitz_selection() const {
  // A one-point U has a constant selection.
  return method_ == Method::kQuadraticClamp || method_ == Method::kQuadraticCoordinate ||
         (method_ == Method::kFinite && U_.points().size() == 1) || l1_.lipschitz_selection_certified;
}

double Hamiltonian::h_cv(const VectorXd& p, const VectorXd& u) const {
  if (p.size() != dim() || u.size() != dim()) throw ValidationError("hamiltonian", "h_cv: dimension mismatch");
  if (!U_.contains(u, 1e-12)) throw DomainError("hamiltonian", "h_cv: u is not in U");
  return p.dot(u) + l1_.value(u);
}

double Hamiltonian::minimize_into(const VectorXd& p, VectorXd& u) const {
  if (method_ == Method::kQuadraticClamp && p.size() == dim() && p.allFinite()) {
    // Allocation-free path; this sits in the innermost solver loop.
    u.resize(dim());
    double v = l1_.offset;
    for (int i = 0; i < dim(); ++i) {
      const double c = l1_.linear ? (*l1_.linear)(i) : 0.0;
      u(i) = std::clamp(-(p(i) + c) / qdiag_(i), U_.lo()(i), U_.hi()(i));
      v += (p(i) + c) * u(i) + 0.5 * qdiag_(i) * u(i) * u(i);
    }
    return v;
  }
  auto [v, arg] = minimize(p);
  u = std::move(arg);
  return v;
}

double Hamiltonian::h_min(const VectorXd& p) const {
  if (method_ == Method::kQuadraticClamp) {
    thread_local VectorXd u;
    return minimize_into(p, u);
  }
  return minimize(p).first;
}

VectorXd Hamiltonian::gamma(const VectorXd& p) const { return minimize(p).second; }

std::pair<double, VectorXd> Hamiltonian::minimize(const VectorXd& p) const {
  const int m = dim();
  if (p.size() != m) throw ValidationError("hamiltonian", "p has the wrong dimension");
  if (!p.allFinite()) throw NumericError("hamiltonian", "non-finite costate p");
  const VectorXd& lo = U_.lo();
  const VectorXd& hi = U_.hi();
  switch (method_) {
    case Method::kQuadraticClamp: {
      const VectorXd c = l1_.linear ? VectorXd(p + *l1_.linear) : p;
      const VectorXd u = (-c.array() / qdiag_.array()).matrix().cwiseMax(lo).cwiseMin(hi);
      return {p.dot(u) + l1_.value(u), u};
    }
    case Method::kQuadraticCoordinate: {
      // Strictly convex QP on a box: projected Gauss-Seidel converges to the unique minimizer.
      const MatrixXd& q = *l1_.quadratic;
      const VectorXd c = l1_.linear ? VectorXd(p + *l1_.linear) : p;
      VectorXd u = VectorXd::Zero(m).cwiseMax(lo).cwiseMin(hi);
      for (int sweep = 0; sweep < 100000; ++sweep) {
        double change = 0.0;
        for (int i = 0; i < m; ++i) {
          const double r = c(i) + q.row(i).dot(u) - q(i, i) * u(i);
          const double next = std::clamp(-r / q(i, i), lo(i), hi(i));
          change = std::max(change, std::abs(next - u(i)));
          u(i) = next;
        }
        if (change < 1e-15) break;
      }
      return {p.dot(u) + l1_.value(u), u};
    }
    case Method::kLinearBox: {
      const VectorXd c = p + *l1_.linear;
      VectorXd u(m);
      for (int i = 0; i < m; ++i) {
        if (c(i) > 0.0) u(i) = lo(i);
        else if (c(i) < 0.0) u(i) = hi(i);
        else u(i) = clamp_zero(lo(i), hi(i));
        if (!std::isfinite(u(i))) {
          std::ostringstream msg;
          msg << "H_min(p) = -inf: linear cost pushes component " << i << " to infinity";
          throw UnboundedHamiltonian(msg.str());
        }
      }
      return {p.dot(u) + l1_.value(u), u};
    }
    case Method::kFinite: {
      const auto& pts = U_.points();
      double best = kInf;
      const VectorXd* arg = nullptr;
      for (const auto& u : pts) {
        const double v = p.dot(u) + l1_.value(u);
        const double tie = 1e-14 * std::max(1.0, std::abs(v));
        if (!arg || v < best - tie) {
          best = v;
          arg = &u;
        } else if (std::abs(v - best) <= tie) {
          // Ties: minimal norm, then lexicographic.
          const double na = u.squaredNorm(), nb = arg->squaredNorm();
          if (na < nb || (na == nb && lex_less(u, *arg))) {
            best = std::min(best, v);
            arg = &u;
          }
        }
      }
      return {p.dot(*arg) + l1_.value(*arg), *arg};
    }
    case Method::kGolden:
      return golden(p);
  }
  throw NumericError("hamiltonian", "unknown minimization method");
}

std::pair<double, VectorXd> Hamiltonian::golden(const VectorXd& p) const {
  if (U_.compact()) return golden_on(p, U_.lo(), U_.hi());
  // Coercive cost on an unbounded box: grow the search box until the minimizer is interior.
  double radius = 16.0;
  for (int attempt = 0; attempt < 20; ++attempt, radius *= 2.0) {
    const VectorXd lo = U_.lo().cwiseMax(VectorXd::Constant(dim(), -radius));
    const VectorXd hi = U_.hi().cwiseMin(VectorXd::Constant(dim(), radius));
    auto res = golden_on(p, lo, hi);
    bool interior = true;
    for (int i = 0; i < dim(); ++i) {
      const bool at_lo = std::isinf(U_.lo()(i)) && res.second(i) <= lo(i) + 1e-8 * radius;
      const bool at_hi = std::isinf(U_.hi()(i)) && res.second(i) >= hi(i) - 1e-8 * radius;
      interior = interior && !at_lo && !at_hi;
    }
    if (interior) return res;
  }
  throw UnboundedHamiltonian("minimizer escapes every search box; control cost is not coercive");
}

std::pair<double, VectorXd> Hamiltonian::golden_on(const VectorXd& p, const VectorXd& lo,
                                                   const VectorXd& hi) const {
  const int m = dim();
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  auto f = [&](const VectorXd& u) { return p.dot(u) + l1_.value(u); };
  // Deterministic multistarts: center, then Halton points (bases 2, 3, 5, ...).
  static constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  auto halton = [](int index, int base) {
    double f = 1.0, r = 0.0;
    for (int i = index; i > 0; i /= base) {
      f /= base;
      r += f * (i % base);
    }
    return r;
  };
  double best = kInf;
  VectorXd best_u = lo;
  for (int s = 0; s < 8; ++s) {
    VectorXd u(m);
    for (int i = 0; i < m; ++i) {
      const double frac = s == 0 ? 0.5 : halton(s, kPrimes[i % 12]);
      u(i) = lo(i) + frac * (hi(i) - lo(i));
    }
    double val = f(u);
    for (int sweep = 0; sweep < 200; ++sweep) {
      const double before = val;
      for (int i = 0; i < m; ++i) {
        double a = lo(i), b = hi(i);
        if (a == b) continue;
        VectorXd w = u;
        auto g = [&](double x) {
          w(i) = x;
          return f(w);
        };
        double c = b - invphi * (b - a), d = a + invphi * (b - a);
        double fc = g(c), fd = g(d);
        while (b - a > 1e-10 * std::max(1.0, std::abs(a) + std::abs(b))) {
          if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - invphi * (b - a);
            fc = g(c);
          } else {
            a = c;
            c = d;
            fc = fd;
            d = a + invphi * (b - a);
            fd = g(d);
          }
        }
        // Keep the better of the bracket midpoint and the endpoints (minimizer on the boundary).
        double cand = 0.5 * (a + b);
        double fcand = g(cand);
        for (double e : {lo(i), hi(i)}) {
          const double fe = g(e);
          if (fe < fcand) {
            fcand = fe;
            cand = e;
          }
        }
        if (fcand <= val) {
          u(i) = cand;
          val = fcand;
        }
      }
      if (before - val <= 1e-14 * std::max(1.0, std::abs(val))) break;
    }
    const double tie = 1e-12 * std::max(1.0, std::abs(val));
    if (val < best - tie || (std::abs(val - best) <= tie && lex_less(u, best_u))) {
      best = std::min(best, val);
      best_u = u;
    }
  }
  return {f(best_u), best_u};
}

LipschitzAudit lipschitz_audit(const Hamiltonian& h, int samples, double radius, std::uint64_t seed) {
  LipschitzAudit out;
  const int m = h.dim();
  out.samples = samples;
  out.L_upper = h.control_set().max_norm();
  auto update = [&](const VectorXd& p, const VectorXd& q) {
    const double dist = (p - q).norm();
    if (dist <= 0.0) return;
    const auto [hp, gp] = h.minimize(p);
    const auto [hq, gq] = h.minimize(q);
    out.L = std::max(out.L, std::abs(hp - hq) / dist);
    out.L_grad = std::max(out.L_grad, (gp - gq).norm() / dist);
  };
  if (m == 1) {
    for (int i = 0; i + 1 < samples; ++i) {
      const double a = -radius + 2.0 * radius * i / (samples - 1);
      const double b = -radius + 2.0 * radius * (i + 1) / (samples - 1);
      update(VectorXd::Constant(1, a), VectorXd::Constant(1, b));
    }
    return out;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-radius, radius);
  std::normal_distribution<double> normal;
  const double step = 2.0 * radius / samples;
  for (int i = 0; i < samples; ++i) {
    VectorXd p(m), dir(m);
    for (int j = 0; j < m; ++j) {
      p(j) = unif(rng);
      dir(j) = normal(rng);
    }
    update(p, p + step * dir.normalized());
  }
  return out;
}

}  // namespace delayctl
