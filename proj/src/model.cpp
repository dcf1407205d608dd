#include "delayctl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "delayctl/errors.hpp"

namespace delayctl {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw ValidationError("model", msg);
}

std::string shape(const MatrixXd& a) {
  std::ostringstream s;
  s << a.rows() << "x" << a.cols();
  return s.str();
}

}  // namespace

DelayMeasure::DelayMeasure(int n, int m, double d) : n_(n), m_(m), d_(d) {}

DelayMeasure DelayMeasure::zero(int n, int m, double d) { return DelayMeasure(n, m, d); }

DelayMeasure DelayMeasure::piecewise_constant(std::vector<double> knots, std::vector<MatrixXd> values) {
  require(knots.size() >= 2, "density needs at least two breakpoints");
  require(values.size() + 1 == knots.size(), "piecewise-constant density needs one value per interval");
  DelayMeasure mu(static_cast<int>(values[0].rows()), static_cast<int>(values[0].cols()), -knots.front());
  mu.kind_ = DensityKind::kPiecewiseConstant;
  mu.knots_ = std::move(knots);
  mu.values_ = std::move(values);
  mu.validate();
  return mu;
}

DelayMeasure DelayMeasure::sampled(std::vector<double> knots, std::vector<MatrixXd> values) {
  require(knots.size() >= 2, "density needs at least two sample points");
  require(values.size() == knots.size(), "sampled density needs one value per sample point");
  DelayMeasure mu(static_cast<int>(values[0].rows()), static_cast<int>(values[0].cols()), -knots.front());
  mu.kind_ = DensityKind::kSampled;
  mu.knots_ = std::move(knots);
  mu.values_ = std::move(values);
  mu.validate();
  return mu;
}

DelayMeasure DelayMeasure::constant_density(const MatrixXd& value, double d) {
  return piecewise_constant({-d, 0.0}, {value});
}

DelayMeasure DelayMeasure::point(const MatrixXd& weight, double location, double d) {
  DelayMeasure mu(static_cast<int>(weight.rows()), static_cast<int>(weight.cols()), d);
  mu.add_atom(location, weight);
  return mu;
}

DelayMeasure& DelayMeasure::add_atom(double location, const MatrixXd& weight) {
  if (n_ == 0 && m_ == 0) {
    n_ = static_cast<int>(weight.rows());
    m_ = static_cast<int>(weight.cols());
  }
  require(weight.rows() == n_ && weight.cols() == m_,
          "atom weight has shape " + shape(weight) + ", expected n x m");
  require(location >= -d_ - 1e-14 && location <= 1e-14, "atom location outside [-d, 0]");
  atoms_.push_back({std::clamp(location, -d_, 0.0), weight});
  std::sort(atoms_.begin(), atoms_.end(),
            [](const Atom& a, const Atom& b) { return a.location < b.location; });
  return *this;
}

MatrixXd DelayMeasure::density(double xi) const {
  MatrixXd out = MatrixXd::Zero(n_, m_);
  if (kind_ == DensityKind::kNone || xi < knots_.front() || xi > knots_.back()) return out;
  auto it = std::upper_bound(knots_.begin(), knots_.end(), xi);
  std::size_t i = (it == knots_.begin()) ? 0 : static_cast<std::size_t>(it - knots_.begin()) - 1;
  if (kind_ == DensityKind::kPiecewiseConstant) {
    i = std::min(i, values_.size() - 1);
    return values_[i];
  }
  if (i + 1 >= knots_.size()) return values_.back();
  const double w = (xi - knots_[i]) / (knots_[i + 1] - knots_[i]);
  return (1.0 - w) * values_[i] + w * values_[i + 1];
}

std::vector<double> DelayMeasure::breakpoints() const {
  std::vector<double> out;
  if (kind_ != DensityKind::kNone) out = knots_;
  for (const auto& a : atoms_) out.push_back(a.location);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

MatrixXd DelayMeasure::total_mass() const {
  MatrixXd mass = MatrixXd::Zero(n_, m_);
  if (kind_ == DensityKind::kPiecewiseConstant) {
    for (std::size_t i = 0; i < values_.size(); ++i) mass += (knots_[i + 1] - knots_[i]) * values_[i];
  } else if (kind_ == DensityKind::kSampled) {
    for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
      mass += 0.5 * (knots_[i + 1] - knots_[i]) * (values_[i] + values_[i + 1]);
    }
  }
  for (const auto& a : atoms_) mass += a.weight;
  return mass;
}

double DelayMeasure::density_l2_norm() const {
  double acc = 0.0;
  if (kind_ == DensityKind::kPiecewiseConstant) {
    for (std::size_t i = 0; i < values_.size(); ++i) {
      acc += (knots_[i + 1] - knots_[i]) * values_[i].squaredNorm();
    }
  } else if (kind_ == DensityKind::kSampled) {
    // Exact for the linear interpolant: h/3 (|a|^2 + <a,b> + |b|^2).
    for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
      const MatrixXd& a = values_[i];
      const MatrixXd& b = values_[i + 1];
      acc += (knots_[i + 1] - knots_[i]) / 3.0 *
             (a.squaredNorm() + (a.array() * b.array()).sum() + b.squaredNorm());
    }
  }
  return std::sqrt(acc);
}

double DelayMeasure::total_variation() const {
  double tv = 0.0;
  if (kind_ == DensityKind::kPiecewiseConstant) {
    for (std::size_t i = 0; i < values_.size(); ++i) tv += (knots_[i + 1] - knots_[i]) * values_[i].norm();
  } else if (kind_ == DensityKind::kSampled) {
    // Upper bound through the endpoint norms (norm is convex).
    for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
      tv += 0.5 * (knots_[i + 1] - knots_[i]) * (values_[i].norm() + values_[i + 1].norm());
    }
  }
  for (const auto& a : atoms_) tv += a.weight.norm();
  return tv;
}

void DelayMeasure::validate() const {
  require(d_ > 0.0 && std::isfinite(d_), "delay horizon d must be positive");
  if (kind_ != DensityKind::kNone) {
    require(std::abs(knots_.front() + d_) <= 1e-12 * std::max(1.0, d_),
            "density breakpoints must start at -d");
    require(std::abs(knots_.back()) <= 1e-12, "density breakpoints must end at 0");
    for (std::size_t i = 0; i + 1 < knots_.size(); ++i) {
      require(knots_[i + 1] > knots_[i], "density breakpoints must be strictly increasing");
    }
    for (const auto& v : values_) {
      require(v.rows() == n_ && v.cols() == m_, "density value has shape " + shape(v));
      require(v.allFinite(), "density values must be finite");
    }
  }
  for (const auto& a : atoms_) {
    require(a.location >= -d_ && a.location <= 0.0, "atom location outside [-d, 0]");
    require(a.weight.allFinite(), "atom weight must be finite");
  }
  require(std::isfinite(density_l2_norm()), "density is not square integrable");
}

ControlSet ControlSet::box(VectorXd lo, VectorXd hi) {
  require(lo.size() == hi.size(), "box bounds have different lengths");
  require(lo.size() >= 1, "control dimension must be positive");
  for (Eigen::Index i = 0; i < lo.size(); ++i) {
    require(!std::isnan(lo(i)) && !std::isnan(hi(i)), "box bounds must not be NaN");
    require(lo(i) <= hi(i), "box bounds need lo <= hi");
  }
  ControlSet u;
  u.kind_ = Kind::kBox;
  u.dim_ = static_cast<int>(lo.size());
  u.lo_ = std::move(lo);
  u.hi_ = std::move(hi);
  return u;
}

ControlSet ControlSet::finite(std::vector<VectorXd> points) {
  require(!points.empty(), "finite control set must be nonempty");
  const auto m = points.front().size();
  require(m >= 1, "control dimension must be positive");
  for (const auto& p : points) {
    require(p.size() == m, "finite control points have different lengths");
    require(p.allFinite(), "finite control points must be finite");
  }
  ControlSet u;
  u.kind_ = Kind::kFinite;
  u.dim_ = static_cast<int>(m);
  u.lo_ = points.front();
  u.hi_ = points.front();
  for (const auto& p : points) {
    u.lo_ = u.lo_.cwiseMin(p);
    u.hi_ = u.hi_.cwiseMax(p);
  }
  u.points_ = std::move(points);
  return u;
}

bool ControlSet::compact() const {
  if (kind_ == Kind::kFinite) return true;
  return lo_.allFinite() && hi_.allFinite();
}

bool ControlSet::contains(const VectorXd& u, double tol) const {
  if (u.size() != dim_) return false;
  if (kind_ == Kind::kBox) {
    for (int i = 0; i < dim_; ++i) {
      if (!(u(i) >= lo_(i) - tol && u(i) <= hi_(i) + tol)) return false;
    }
    return true;
  }
  return std::any_of(points_.begin(), points_.end(),
                     [&](const VectorXd& p) { return (p - u).lpNorm<Eigen::Infinity>() <= tol; });
}

VectorXd ControlSet::project(const VectorXd& u) const {
  if (kind_ == Kind::kBox) return u.cwiseMax(lo_).cwiseMin(hi_);
  const VectorXd* best = &points_.front();
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& p : points_) {
    const double dist = (p - u).squaredNorm();
    if (dist < best_d) {
      best_d = dist;
      best = &p;
    }
  }
  return *best;
}

double ControlSet::max_norm() const {
  if (!compact()) return std::numeric_limits<double>::infinity();
  if (kind_ == Kind::kFinite) {
    double mx = 0.0;
    for (const auto& p : points_) mx = std::max(mx, p.norm());
    return mx;
  }
  return lo_.cwiseAbs().cwiseMax(hi_.cwiseAbs()).norm();
}

std::vector<VectorXd> ControlSet::sample(int per_axis, double clip) const {
  if (kind_ == Kind::kFinite) return points_;
  per_axis = std::max(per_axis, 2);
  std::vector<VectorXd> out;
  long total = 1;
  for (int i = 0; i < dim_; ++i) total *= per_axis;
  std::vector<int> idx(dim_, 0);
  for (long c = 0; c < total; ++c) {
    VectorXd u(dim_);
    for (int i = 0; i < dim_; ++i) {
      const double a = std::max(lo_(i), -clip), b = std::min(hi_(i), clip);
      u(i) = (a == b) ? a : a + (b - a) * idx[i] / (per_axis - 1);
    }
    out.push_back(u);
    for (int i = 0; i < dim_; ++i) {
      if (++idx[i] < per_axis) break;
      idx[i] = 0;
    }
  }
  return out;
}

void ProblemSpec::validate() const {
  require(n >= 1 && m >= 1 && k >= 1, "dimensions n, m, k must be positive");
  require(a0.rows() == n && a0.cols() == n, "a0 has shape " + shape(a0) + ", expected n x n");
  require(b0.rows() == n && b0.cols() == m, "b0 has shape " + shape(b0) + ", expected n x m");
  require(sigma.rows() == n && sigma.cols() == k, "sigma has shape " + shape(sigma) + ", expected n x k");
  require(a0.allFinite() && b0.allFinite() && sigma.allFinite(), "coefficients must be finite");
  require(d > 0.0 && std::isfinite(d), "delay d must be positive");
  require(T > 0.0 && std::isfinite(T), "horizon T must be positive");
  require(b1.n() == n && b1.m() == m, "delay measure acts as n x m matrices");
  require(std::abs(b1.d() - d) <= 1e-12 * std::max(1.0, d), "delay measure horizon differs from d");
  b1.validate();
  require(U.dim() == m, "control set dimension differs from m");
  require(initial.y0.size() == n, "initial state y0 must have n entries");
  require(static_cast<bool>(initial.u0.value), "initial control history u0 missing");
  require(static_cast<bool>(cost.running.value), "running cost missing");
  require(static_cast<bool>(cost.control.value), "control cost missing");
  require(static_cast<bool>(cost.terminal.value), "terminal cost missing");
  if (cost.control.quadratic) {
    require(cost.control.quadratic->rows() == m && cost.control.quadratic->cols() == m,
            "quadratic control cost matrix must be m x m");
  }
}

RunningCost zero_running_cost() {
  RunningCost c;
  c.value = [](double, const VectorXd&) { return 0.0; };
  c.gradient = [](double, const VectorXd& y) { return VectorXd::Zero(y.size()).eval(); };
  c.bound = 0.0;
  c.spatially_constant = true;
  c.is_zero = true;
  c.description = "zero";
  return c;
}

RunningCost constant_running_cost(double v) {
  RunningCost c;
  c.value = [v](double, const VectorXd&) { return v; };
  c.gradient = [](double, const VectorXd& y) { return VectorXd::Zero(y.size()).eval(); };
  c.bound = std::abs(v);
  c.spatially_constant = true;
  c.is_zero = (v == 0.0);
  c.description = "constant";
  return c;
}

ControlCost quadratic_control_cost(const MatrixXd& q, const VectorXd& lin, double c0) {
  require(q.rows() == q.cols() && q.rows() == lin.size(), "quadratic cost shapes disagree");
  ControlCost c;
  const MatrixXd qs = 0.5 * (q + q.transpose());
  c.value = [qs, lin, c0](const VectorXd& u) { return 0.5 * u.dot(qs * u) + lin.dot(u) + c0; };
  c.gradient = [qs, lin](const VectorXd& u) { return (qs * u + lin).eval(); };
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(qs);
  const double lmin = es.eigenvalues().minCoeff();
  c.coercive = lmin > 0.0;
  // min over R^m of 0.5 u'Qu + c'u + c0 = c0 - 0.5 c'Q^{-1}c.
  c.lower_bound = c.coercive ? c0 - 0.5 * lin.dot(qs.ldlt().solve(lin))
                             : -std::numeric_limits<double>::infinity();
  c.quadratic = qs;
  c.linear = lin;
  c.offset = c0;
  c.description = "quadratic";
  return c;
}

ControlCost linear_control_cost(const VectorXd& lin) {
  ControlCost c;
  c.value = [lin](const VectorXd& u) { return lin.dot(u); };
  c.gradient = [lin](const VectorXd&) { return lin; };
  c.lower_bound = -std::numeric_limits<double>::infinity();
  c.linear = lin;
  c.description = "linear";
  return c;
}

ControlCost zero_control_cost(int m) {
  ControlCost c = linear_control_cost(VectorXd::Zero(m));
  c.lower_bound = 0.0;
  c.description = "zero";
  return c;
}

TerminalCost zero_terminal_cost() {
  TerminalCost c;
  c.value = [](const VectorXd&) { return 0.0; };
  c.gradient = [](const VectorXd& y) { return VectorXd::Zero(y.size()).eval(); };
  c.bound = 0.0;
  c.description = "zero";
  return c;
}

TerminalCost quadratic_terminal_cost(const MatrixXd& w, const VectorXd& center) {
  require(w.rows() == w.cols() && w.rows() == center.size(), "quadratic terminal cost shapes disagree");
  TerminalCost c;
  const MatrixXd ws = 0.5 * (w + w.transpose());
  c.value = [ws, center](const VectorXd& y) { return (y - center).dot(ws * (y - center)); };
  c.gradient = [ws, center](const VectorXd& y) { return (2.0 * ws * (y - center)).eval(); };
  c.growth_degree = 2;
  c.description = "quadratic";
  return c;
}

TerminalCost well_terminal_cost(const VectorXd& center, double width, double depth) {
  require(width > 0.0, "well width must be positive");
  TerminalCost c;
  const double s2 = 2.0 * width * width;
  c.value = [=](const VectorXd& y) { return depth * (1.0 - std::exp(-(y - center).squaredNorm() / s2)); };
  c.gradient = [=](const VectorXd& y) {
    return (depth * std::exp(-(y - center).squaredNorm() / s2) * 2.0 / s2 * (y - center)).eval();
  };
  c.bound = std::abs(depth);
  c.description = "well";
  return c;
}

RunningCost quadratic_running_cost(const MatrixXd& w, const VectorXd& center) {
  const TerminalCost q = quadratic_terminal_cost(w, center);
  RunningCost c;
  c.value = [f = q.value](double, const VectorXd& y) { return f(y); };
  c.gradient = [g = q.gradient](double, const VectorXd& y) { return g(y); };
  c.growth_degree = 2;
  c.description = "quadratic";
  return c;
}

RunningCost well_running_cost(const VectorXd& center, double width, double depth) {
  const TerminalCost q = well_terminal_cost(center, width, depth);
  RunningCost c;
  c.value = [f = q.value](double, const VectorXd& y) { return f(y); };
  c.gradient = [g = q.gradient](double, const VectorXd& y) { return g(y); };
  c.bound = q.bound;
  c.description = "well";
  return c;
}

ControlHistory constant_history(const VectorXd& u) {
  ControlHistory h;
  h.value = [u](double) { return u; };
  h.description = "constant";
  return h;
}

ControlHistory sampled_history(double d, const MatrixXd& samples) {
  require(samples.cols() >= 2, "sampled history needs at least two samples");
  require(d > 0.0, "sampled history needs d > 0");
  const auto steps = samples.cols() - 1;
  ControlHistory h;
  h.value = [d, samples, steps](double s) -> VectorXd {
    if (s < -d - 1e-12 || s > 1e-12) {
      throw DomainError("model", "control history queried outside [-d, 0]");
    }
    const double pos = std::clamp((s + d) / d * steps, 0.0, static_cast<double>(steps));
    const auto i = std::min(static_cast<Eigen::Index>(pos), steps - 1);
    const double w = pos - static_cast<double>(i);
    return (1.0 - w) * samples.col(i) + w * samples.col(i + 1);
  };
  for (Eigen::Index i = 1; i < steps; ++i) h.breaks.push_back(-d + d * static_cast<double>(i) / steps);
  h.description = "sampled";
  return h;
}

}  // namespace delayctl
