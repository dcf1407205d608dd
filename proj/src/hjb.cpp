#include "delayctl/hjb.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "delayctl/errors.hpp"
#include "delayctl/gaussian.hpp"
#include "delayctl/linalg.hpp"
#include "delayctl/quadrature.hpp"

namespace delayctl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

GridConfig resolve(GridConfig g, int n) {
  if (n > 3) throw ValidationError("hjb", "the reduced grid supports n <= 3");
  static constexpr int kNodes[] = {161, 31, 13};
  static constexpr int kTheta[] = {24, 16, 12};
  static constexpr int kQuad[] = {20, 8, 5};
  if (g.nodes <= 0) g.nodes = kNodes[n - 1];
  if (g.theta_order <= 0) g.theta_order = kTheta[n - 1];
  if (g.quad_order <= 0) g.quad_order = kQuad[n - 1];
  if (g.nodes < 4) throw ValidationError("hjb", "cubic interpolation needs at least 4 nodes per axis");
  if (g.time_steps < 1) throw ValidationError("hjb", "time_steps must be positive");
  return g;
}

QuadratureSpec quad_spec(const GridConfig& g) {
  QuadratureSpec q;
  q.kind = QuadratureSpec::Kind::kGaussHermite;
  q.order = g.quad_order;
  return q;
}

// Cubic Lagrange weights on four consecutive nodes at local coordinate x in [0, 3].
void lagrange4(double x, double* w, double* dw) {
  const double a = x, b = x - 1.0, c = x - 2.0, e = x - 3.0;
  w[0] = -b * c * e / 6.0;
  w[1] = a * c * e / 2.0;
  w[2] = -a * b * e / 2.0;
  w[3] = a * b * c / 6.0;
  if (dw) {
    dw[0] = -(c * e + b * e + b * c) / 6.0;
    dw[1] = (c * e + a * e + a * c) / 2.0;
    dw[2] = -(b * e + a * e + a * b) / 2.0;
    dw[3] = (b * c + a * c + a * b) / 6.0;
  }
}

// Tensor stencil of 4^n nodes around y.
struct Stencil {
  int size = 0;
  std::array<int, 64> idx{};
  std::array<double, 64> w{};
  std::array<std::array<double, 64>, 3> dw{};  // d/dy_a of w, filled on request
};

struct AxisWeights {
  int base = 0;
  double w[4], dw[4];
  bool inside = true;
};

AxisWeights axis_weights(const ReducedValueField& f, int axis, double y) {
  AxisWeights a;
  const int N = f.nodes_per_axis;
  const double h = f.step(axis);
  double p = (y - f.lo(axis)) / h;
  if (p < 0.0 || p > N - 1) a.inside = false;
  p = std::clamp(p, 0.0, static_cast<double>(N - 1));
  a.base = std::clamp(static_cast<int>(std::floor(p)) - 1, 0, N - 4);
  lagrange4(p - a.base, a.w, a.dw);
  for (double& d : a.dw) d = a.inside ? d / h : 0.0;
  return a;
}

void make_stencil(const ReducedValueField& f, const VectorXd& y, Stencil& s, bool with_grad = false) {
  const int n = f.n;
  s.size = 1;
  s.idx[0] = 0;
  s.w[0] = 1.0;
  for (int d = 0; d < n; ++d) s.dw[d][0] = 1.0;
  int stride = 1;
  // Tensor expansion one axis at a time; entry e + k * size has offset k on this axis.
  for (int a = 0; a < n; ++a) {
    const AxisWeights ax = axis_weights(f, a, y(a));
    const int size = s.size;
    for (int k = 3; k >= 0; --k) {
      const int off = (ax.base + k) * stride;
      for (int e = 0; e < size; ++e) {
        const int c = e + k * size;
        s.idx[c] = s.idx[e] + off;
        if (with_grad) {
          for (int d = 0; d < n; ++d) s.dw[d][c] = s.dw[d][e] * (d == a ? ax.dw[k] : ax.w[k]);
        }
        s.w[c] = s.w[e] * ax.w[k];
      }
    }
    s.size = 4 * size;
    stride *= f.nodes_per_axis;
  }
}

std::vector<double> activation_breaks(const ProblemSpec& spec, double t) {
  std::vector<double> out;
  for (double a : atom_activation_times(spec)) {
    if (a > 0.0 && a < t) out.push_back(a);
  }
  return out;
}

// Sigma_{t,s} = Q_t - Q_s = e^{s a0} Q_{t-s} e^{s a0^T}, computed without cancellation.
MatrixXd cross_covariance(double t, double s, const ProblemSpec& spec) {
  const MatrixXd e = mat_exp(s, spec.a0);
  return e * gramian(t - s, spec.a0, spec.sigma) * e.transpose();
}

double sup_norm_or_inf(const std::optional<double>& bound) { return bound ? *bound : kInf; }

// One node of the singular time rule at a fixed outer time t.
struct RuleNode {
  double s = 0.0, w = 0.0, inv_sqrt_s = 0.0;
  ReducedValueField::TimeLookup lk;
  MatrixXd offsets;  // n x G samples of N(0, Sigma_{t,s})
  VectorXd gw;       // G weights
  MatrixXd C;        // m x G: (pinv_sqrt(Sigma) D)^T xi_g
  MatrixXd exp_neg;  // e^{-s a0}
  MatrixXd extra;    // n x m, split form only: D_t - e^{s a0} D_{t-s}
  double kernel_constant = 0.0;
};

struct TimeNode {
  double t = 0.0;
  MatrixXd D;
  GaussKernel K;
  std::vector<RuleNode> rule;
};

// The discrete Picard map C(g) on a fixed grid.
class PicardMap {
 public:
  PicardMap(const ProblemSpec& spec, const ReducedValueField& shape, const GridConfig& cfg)
      : spec_(spec), h_(spec.U, spec.cost.control), shape_(shape), cfg_(cfg) {
    const QuadratureSpec q = quad_spec(cfg);
    // With degenerate noise the part of D_t that enters through the delay
    // window during [0, s] is not absorbed by Sigma at the (t - s)^{-1/2}
    // rate; it is differentiated directly instead.
    split_ = spec.n >= 2 && psd_factor(spec.sigma * spec.sigma.transpose()).rank < spec.n;
    nodes_.resize(shape.times.size());
    for (std::size_t i = 1; i < shape.times.size(); ++i) {
      TimeNode& tn = nodes_[i];
      tn.t = shape.times[i];
      tn.D = etAB0(tn.t, spec, !shape.left_limit[i]);
      tn.K = make_kernel(tn.t, gramian(tn.t, spec.a0, spec.sigma), q);
      require_in_range(tn.K, tn.D, "picard_solve");
      M0_ = std::max(M0_, std::sqrt(tn.t) * (tn.K.pinv_sqrtQ0() * tn.D).norm());
      const TimeRule tr = singular_time_rule(tn.t, cfg.theta_order, activation_breaks(spec, tn.t));
      for (std::size_t r = 0; r < tr.s.size(); ++r) {
        RuleNode rn;
        rn.s = tr.s[r];
        rn.w = tr.w[r];
        rn.inv_sqrt_s = 1.0 / std::sqrt(rn.s);
        rn.lk = shape.lookup(rn.s);
        const GaussKernel ks = make_kernel(tn.t - rn.s, cross_covariance(tn.t, rn.s, spec), q);
        MatrixXd shift = tn.D;
        if (split_) {
          shift = mat_exp(rn.s, spec.a0) * etAB0(tn.t - rn.s, spec);
          rn.extra = tn.D - shift;
        }
        require_in_range(ks, shift, "picard_solve");
        rn.offsets = ks.nodes;
        rn.gw = ks.rule.weights;
        const MatrixXd a = ks.pinv_sqrtQ0() * shift;
        rn.C = a.transpose() * ks.rule.points;
        rn.exp_neg = mat_exp(-rn.s, spec.a0);
        rn.kernel_constant = std::sqrt(tn.t - rn.s) * a.norm();
        kernel_constant_ = std::max(kernel_constant_, rn.kernel_constant);
        tn.rule.push_back(std::move(rn));
      }
    }
  }

  const std::vector<TimeNode>& nodes() const { return nodes_; }
  const Hamiltonian& hamiltonian() const { return h_; }
  double kernel_constant() const { return kernel_constant_; }
  double terminal_constant() const { return M0_; }
  bool split() const { return split_; }

  // R_t[phi] and t^{1/2} grad^B R_t[phi] at (t_i, y).
  void terminal_terms(std::size_t i, const VectorXd& y, double& val, VectorXd& grad) const {
    const auto& phi = spec_.cost.terminal.value;
    if (i == 0) {
      val = phi(y);
      grad = VectorXd::Zero(spec_.m);
      return;
    }
    const TimeNode& tn = nodes_[i];
    val = smooth_apply(tn.K, phi, y);
    grad = std::sqrt(tn.t) * smooth_grad_B(tn.K, phi, y, tn.D);
  }

  // Pullback l0 convolution and its scaled B-gradient at (t_i, y).
  void running_terms(std::size_t i, const VectorXd& y, double& val, VectorXd& grad) const {
    val = 0.0;
    grad = VectorXd::Zero(spec_.m);
    if (i == 0 || spec_.cost.running.is_zero) return;
    const TimeNode& tn = nodes_[i];
    const auto& l0 = spec_.cost.running.value;
    for (const RuleNode& rn : tn.rule) {
      const double tt = spec_.T - rn.s;
      for (Eigen::Index g = 0; g < rn.offsets.cols(); ++g) {
        const VectorXd z = rn.exp_neg * (y + rn.offsets.col(g));
        const double wv = rn.w * rn.gw(g) * l0(tt, z);
        val += wv;
        grad += wv * rn.C.col(g);
        if (split_) grad += rn.w * rn.gw(g) * rn.extra.transpose() * (rn.exp_neg.transpose() * running_gradient(tt, z));
      }
    }
    grad *= std::sqrt(tn.t);
  }

  // fbar at every rule time of every node, interpolated in time once per sweep.
  std::vector<std::vector<MatrixXd>> rule_slices(const std::vector<MatrixXd>& fbar) const {
    std::vector<std::vector<MatrixXd>> out(nodes_.size());
    for (std::size_t i = 1; i < nodes_.size(); ++i) {
      for (const RuleNode& rn : nodes_[i].rule) {
        MatrixXd slice = rn.lk.wg[0] * fbar[rn.lk.idx[0]];
        for (int k = 1; k < rn.lk.count; ++k) slice += rn.lk.wg[k] * fbar[rn.lk.idx[k]];
        out[i].push_back(std::move(slice));
      }
    }
    return out;
  }

  // The H_min part of C at (t_i, y) given the time-interpolated fbar.
  void hamiltonian_terms(std::size_t i, const VectorXd& y, const std::vector<MatrixXd>& slices, double& val,
                         VectorXd& grad) const {
    val = 0.0;
    grad.setZero(spec_.m);
    if (i == 0) return;
    const TimeNode& tn = nodes_[i];
    const int m = spec_.m;
    const int n = spec_.n;
    Stencil st;
    VectorXd point(n), p(m);
    VectorXd u(m);
    double* pp = p.data();
    double* gp = grad.data();
    for (std::size_t r = 0; r < tn.rule.size(); ++r) {
      const RuleNode& rn = tn.rule[r];
      const double* fs = slices[r].data();
      for (Eigen::Index g = 0; g < rn.offsets.cols(); ++g) {
        for (int a = 0; a < n; ++a) point(a) = y(a) + rn.offsets(a, g);
        make_stencil(shape_, point, st, split_);
        for (int k = 0; k < m; ++k) pp[k] = 0.0;
        for (int c = 0; c < st.size; ++c) {
          const double* col = fs + static_cast<std::ptrdiff_t>(st.idx[c]) * m;
          for (int k = 0; k < m; ++k) pp[k] += st.w[c] * col[k];
        }
        for (int k = 0; k < m; ++k) pp[k] *= rn.inv_sqrt_s;
        const double wq = rn.w * rn.gw(g);
        const double* cg = rn.C.data() + g * m;
        if (!split_) {
          const double wv = wq * h_.h_min(p);
          val += wv;
          for (int k = 0; k < m; ++k) gp[k] += wv * cg[k];
          continue;
        }
        const double hv = h_.minimize_into(p, u);
        val += wq * hv;
        for (int k = 0; k < m; ++k) gp[k] += wq * hv * cg[k];
        // grad_y H_min(s^{-1/2} fbar(s, w)) = s^{-1/2} J^T gamma.
        double jtu[3] = {0.0, 0.0, 0.0};
        for (int c = 0; c < st.size; ++c) {
          const double* col = fs + static_cast<std::ptrdiff_t>(st.idx[c]) * m;
          double dot = 0.0;
          for (int k = 0; k < m; ++k) dot += col[k] * u(k);
          for (int d = 0; d < n; ++d) jtu[d] += st.dw[d][c] * dot;
        }
        const double scale = wq * rn.inv_sqrt_s;
        for (int k = 0; k < m; ++k)
          for (int d = 0; d < n; ++d) gp[k] += scale * rn.extra(d, k) * jtu[d];
      }
    }
    grad *= std::sqrt(tn.t);
  }

 private:
  VectorXd running_gradient(double t, const VectorXd& z) const {
    const auto& rc = spec_.cost.running;
    if (rc.gradient) return rc.gradient(t, z);
    VectorXd g(z.size());
    for (Eigen::Index a = 0; a < z.size(); ++a) {
      VectorXd zp = z, zm = z;
      const double h = 1e-6 * std::max(1.0, std::abs(z(a)));
      zp(a) += h;
      zm(a) -= h;
      g(a) = (rc.value(t, zp) - rc.value(t, zm)) / (2 * h);
    }
    return g;
  }

  const ProblemSpec& spec_;
  Hamiltonian h_;
  const ReducedValueField& shape_;
  GridConfig cfg_;
  std::vector<TimeNode> nodes_;
  double kernel_constant_ = 0.0;
  double M0_ = 0.0;
  bool split_ = false;
};

std::vector<double> node_sups(const std::vector<VectorXd>& a, const std::vector<VectorXd>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] - b[i]).cwiseAbs().maxCoeff();
  return out;
}

std::vector<double> node_sups(const std::vector<MatrixXd>& a, const std::vector<MatrixXd>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (a[i] - b[i]).colwise().norm().maxCoeff();
  return out;
}

double weighted(const std::vector<double>& times, const std::vector<double>& df, const std::vector<double>& dg,
                double eta) {
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    const double e = std::exp(-eta * times[i]);
    a = std::max(a, e * df[i]);
    b = std::max(b, e * dg[i]);
  }
  return a + b;
}

double lipschitz_for_estimates(const Hamiltonian& h) {
  if (h.control_set().compact()) return h.control_set().max_norm();
  return lipschitz_audit(h, 200).L;
}

// L * (max_i A_i(eta) + M max_i B_i(eta)), the a-priori contraction factor.
double apriori_factor(const PicardMap& map, double L, double eta) {
  double A = 0.0, B = 0.0;
  for (std::size_t i = 1; i < map.nodes().size(); ++i) {
    const TimeNode& tn = map.nodes()[i];
    double a = 0.0, b = 0.0;
    for (const RuleNode& rn : tn.rule) {
      const double e = std::exp(-eta * (tn.t - rn.s));
      a += rn.w * e * rn.inv_sqrt_s;
      b += rn.w * e * rn.inv_sqrt_s / std::sqrt(tn.t - rn.s);
    }
    A = std::max(A, a);
    B = std::max(B, std::sqrt(tn.t) * b);
  }
  return L * (A + map.kernel_constant() * B);
}

// Bound on sup|f| + sup|fbar| from the data, by solving the scalar Volterra
// inequality behind the contraction estimate.
double apriori_bound(const PicardMap& map, const ReducedValueField& shape, double L, double phi_sup,
                     double l0_sup, double h0) {
  const std::size_t K = shape.times.size();
  const double M = map.kernel_constant();
  const double src = l0_sup + std::abs(h0);
  std::vector<double> G(K, map.terminal_constant() * phi_sup), F(K, phi_sup);
  auto interp = [&](const std::vector<double>& v, const ReducedValueField::TimeLookup& lk) {
    return (1.0 - lk.lambda_lin) * v[lk.a] + lk.lambda_lin * v[lk.b];
  };
  for (int it = 0; it < 500; ++it) {
    double change = 0.0;
    std::vector<double> next(K, map.terminal_constant() * phi_sup);
    next[0] = 0.0;
    for (std::size_t i = 1; i < K; ++i) {
      const TimeNode& tn = map.nodes()[i];
      double acc = 0.0;
      for (const RuleNode& rn : tn.rule) {
        acc += rn.w / std::sqrt(tn.t - rn.s) * (src + L * rn.inv_sqrt_s * interp(G, rn.lk));
      }
      next[i] += std::sqrt(tn.t) * M * acc;
      change = std::max(change, std::abs(next[i] - G[i]) / std::max(1.0, next[i]));
    }
    G = next;
    if (change < 1e-12) break;
  }
  double fmax = phi_sup, gmax = 0.0;
  for (std::size_t i = 1; i < K; ++i) {
    const TimeNode& tn = map.nodes()[i];
    double acc = 0.0;
    for (const RuleNode& rn : tn.rule) acc += rn.w * L * rn.inv_sqrt_s * interp(G, rn.lk);
    F[i] = phi_sup + tn.t * src + acc;
    fmax = std::max(fmax, F[i]);
    gmax = std::max(gmax, G[i]);
  }
  return fmax + gmax;
}

ReducedValueField make_shape(const ProblemSpec& spec, const GridConfig& cfg) {
  ReducedValueField f;
  f.n = spec.n;
  f.m = spec.m;
  f.T = spec.T;
  f.config = cfg;
  f.nodes_per_axis = cfg.nodes;
  auto [lo, hi] = default_bounds(spec);
  f.lo = cfg.lo ? *cfg.lo : lo;
  f.hi = cfg.hi ? *cfg.hi : hi;
  if (f.lo.size() != spec.n || f.hi.size() != spec.n || (f.hi.array() <= f.lo.array()).any()) {
    throw ValidationError("hjb", "grid bounds must satisfy lo < hi componentwise");
  }
  std::vector<double> base;
  for (int i = 0; i <= cfg.time_steps; ++i) {
    base.push_back(spec.T * std::pow(static_cast<double>(i) / cfg.time_steps, cfg.time_grading));
  }
  base.back() = spec.T;
  for (double a : atom_activation_times(spec)) {
    if (a <= 0.0 || a >= spec.T) continue;
    base.erase(std::remove_if(base.begin(), base.end(), [&](double t) { return std::abs(t - a) < 1e-12 * spec.T; }),
               base.end());
  }
  std::vector<std::pair<double, char>> all;
  for (double t : base) all.push_back({t, 0});
  for (double a : atom_activation_times(spec)) {
    if (a <= 0.0 || a >= spec.T) continue;
    all.push_back({a, 1});
    all.push_back({a, 0});
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& x, const auto& y) {
    return x.first < y.first || (x.first == y.first && x.second > y.second);
  });
  for (const auto& [t, left] : all) {
    f.times.push_back(t);
    f.left_limit.push_back(left);
  }
  const int N = f.node_count();
  f.f.assign(f.times.size(), VectorXd::Zero(N));
  f.fbar.assign(f.times.size(), MatrixXd::Zero(spec.m, N));
  f.running_pullback_exact = spec.cost.running.spatially_constant || spec.cost.running.is_zero;
  return f;
}

// Probe points for the mild residual: off-grid y at a few time nodes.
std::vector<std::pair<std::size_t, VectorXd>> residual_probes(const ReducedValueField& f) {
  std::vector<std::pair<std::size_t, VectorXd>> out;
  const std::size_t K = f.times.size();
  const VectorXd center = 0.5 * (f.lo + f.hi);
  for (std::size_t i : {K / 4, K / 2, K - 1}) {
    for (double frac : {-0.21, 0.0, 0.13}) {
      VectorXd y = center;
      for (int a = 0; a < f.n; ++a) y(a) += frac * (f.hi(a) - f.lo(a)) + 0.37 * f.step(a);
      out.push_back({i, y});
    }
  }
  return out;
}

SolveResult solve_on(const ProblemSpec& spec, const GridConfig& cfg_in, const SolveOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  spec.validate();
  const GridConfig cfg = resolve(cfg_in, spec.n);
  // Polynomial costs: the gradient kernels multiply by z, so degree + 1 must
  // stay within what Gauss-Hermite integrates exactly.
  const int exact = 2 * cfg.quad_order - 1;
  for (const auto& [what, degree] : {std::pair{"terminal", spec.cost.terminal.growth_degree},
                                     std::pair{"running", spec.cost.running.growth_degree}}) {
    if (degree + 1 > exact) {
      std::ostringstream msg;
      msg << what << " cost growth degree " << degree << " needs more than " << cfg.quad_order
          << " Gauss-Hermite nodes per axis";
      throw ValidationError("hjb", msg.str());
    }
  }
  SolveResult res;
  ReducedValueField& field = res.field;
  SolveReport& rep = res.report;
  field = make_shape(spec, cfg);
  const PicardMap map(spec, field, cfg);
  const std::size_t K = field.times.size();
  const int N = field.node_count();

  // Iteration-independent terms.
  std::vector<VectorXd> base_f(K, VectorXd::Zero(N));
  std::vector<MatrixXd> base_g(K, MatrixXd::Zero(spec.m, N));
  double val = 0.0, rv = 0.0;
  VectorXd grad, rg;
  double phi_grid_sup = 0.0;
  for (std::size_t i = 0; i < K; ++i) {
    for (int j = 0; j < N; ++j) {
      const VectorXd y = field.node(j);
      map.terminal_terms(i, y, val, grad);
      map.running_terms(i, y, rv, rg);
      base_f[i](j) = val + rv;
      base_g[i].col(j) = grad + rg;
      if (i == 0) phi_grid_sup = std::max(phi_grid_sup, std::abs(val));
    }
  }

  const Hamiltonian& h = map.hamiltonian();
  rep.lipschitz = lipschitz_for_estimates(h);
  rep.kernel_constant = map.kernel_constant();
  if (opts.eta) {
    rep.eta = *opts.eta;
  } else {
    rep.eta = 0.0;
    while (apriori_factor(map, rep.lipschitz, rep.eta) >= opts.target_factor && rep.eta < opts.eta_max) {
      rep.eta = rep.eta == 0.0 ? 1.0 : 2.0 * rep.eta;
    }
  }
  rep.eta_initial = rep.eta;
  rep.apriori_factor = apriori_factor(map, rep.lipschitz, rep.eta);

  // f_0 = R_t[phi] (+ l0 term), fbar_0 its B-gradient kernel.
  field.f = base_f;
  field.fbar = base_g;
  std::vector<std::vector<double>> hist_df, hist_dg;
  std::vector<VectorXd> next_f(K);
  std::vector<MatrixXd> next_g(K);
  auto sweep = [&] {
    const auto slices = map.rule_slices(field.fbar);
    for (std::size_t i = 0; i < K; ++i) {
      next_f[i] = base_f[i];
      next_g[i] = base_g[i];
      if (i == 0) continue;
      for (int j = 0; j < N; ++j) {
        map.hamiltonian_terms(i, field.node(j), slices[i], val, grad);
        next_f[i](j) += val;
        next_g[i].col(j) += grad;
      }
    }
  };
  for (int it = 0; it < opts.max_iter; ++it) {
    sweep();
    hist_df.push_back(node_sups(next_f, field.f));
    hist_dg.push_back(node_sups(next_g, field.fbar));
    field.f.swap(next_f);
    field.fbar.swap(next_g);
    rep.iterations = it + 1;

    auto recompute = [&] {
      rep.distances.clear();
      rep.ratios.clear();
      for (std::size_t k = 0; k < hist_df.size(); ++k) {
        rep.distances.push_back(weighted(field.times, hist_df[k], hist_dg[k], rep.eta));
        if (k > 0) rep.ratios.push_back(rep.distances[k] / rep.distances[k - 1]);
      }
    };
    recompute();
    const double plain = weighted(field.times, hist_df.back(), hist_dg.back(), 0.0);
    rep.distances_unweighted.push_back(plain);
    double scale = 1.0;
    for (const auto& v : field.f) scale = std::max(scale, v.cwiseAbs().maxCoeff());
    if (plain <= opts.tol || plain <= 1e-14 * scale) {
      rep.converged = true;
      break;
    }
    // Persistent ratios >= 1: raise eta (equivalent norms, so the iterates stay valid).
    const int w = opts.stall_window;
    // Ratios of distances at rounding level say nothing about contraction.
    auto stalled = [&] {
      if (static_cast<int>(rep.ratios.size()) < w) return false;
      const double floor = 1e-13 * std::max(1.0, weighted_norm(field, rep.eta));
      for (std::size_t k = rep.ratios.size() - w; k < rep.ratios.size(); ++k) {
        if (rep.ratios[k] < 1.0 || rep.distances[k + 1] < floor) return false;
      }
      return true;
    };
    while (stalled()) {
      if (2.0 * std::max(rep.eta, 0.5) > opts.eta_max) {
        std::ostringstream msg;
        msg << "Picard ratios stayed >= 1 for " << w << " iterations up to eta = " << rep.eta;
        throw NonContraction(msg.str());
      }
      rep.eta = rep.eta == 0.0 ? 1.0 : 2.0 * rep.eta;
      rep.notes.push_back("eta raised to " + std::to_string(rep.eta) + " after stalled ratios");
      recompute();
    }
  }
  if (!rep.converged) rep.notes.push_back("max_iter reached before tol");

  // One more sweep: how far the returned field is from a fixed point.
  sweep();
  rep.mild_residual = weighted(field.times, node_sups(next_f, field.f), node_sups(next_g, field.fbar), rep.eta);

  // Off-grid probes: the map evaluated directly against the interpolant.
  const auto slices = map.rule_slices(field.fbar);
  for (const auto& [i, y] : residual_probes(field)) {
    double tv = 0.0, hv = 0.0;
    VectorXd tg, hg;
    map.terminal_terms(i, y, tv, tg);
    map.running_terms(i, y, rv, rg);
    map.hamiltonian_terms(i, y, slices[i], hv, hg);
    const double fv = field.interp(field.f[i].transpose(), y)(0);
    const VectorXd fg = field.interp(field.fbar[i], y);
    rep.probe_residual = std::max(rep.probe_residual, std::abs(tv + rv + hv - fv));
    rep.probe_residual_grad = std::max(rep.probe_residual_grad, (tg + rg + hg - fg).norm());
  }

  rep.sup_f = 0.0;
  for (const auto& v : field.f) rep.sup_f = std::max(rep.sup_f, v.cwiseAbs().maxCoeff());
  const double phi_sup = spec.cost.terminal.bound ? *spec.cost.terminal.bound : kInf;
  const double l0_sup = spec.cost.running.is_zero ? 0.0 : sup_norm_or_inf(spec.cost.running.bound);
  rep.data_sup = phi_sup + l0_sup;
  if (std::isfinite(rep.data_sup)) {
    const double h0 = h.h_min(VectorXd::Zero(spec.m));
    rep.apriori_bound = apriori_bound(map, field, rep.lipschitz, phi_sup, l0_sup, h0);
    rep.C_T = rep.data_sup > 0.0 ? rep.apriori_bound / rep.data_sup : 0.0;
  } else {
    rep.apriori_bound = kInf;
    rep.C_T = kInf;
    rep.notes.push_back("unbounded data: sup-norm a-priori estimate not applicable (grid sup of phi " +
                        std::to_string(phi_grid_sup) + ")");
  }
  if (!field.running_pullback_exact) {
    rep.notes.push_back("l0 varies in space: grid l0 term uses the pullback e^{-s a0} y");
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

// int_0^tau E[l0(T - s, c(s) + z)] ds, z ~ N(0, Q_{tau-s}), for a given center curve.
template <class Center>
double running_integral(const ProblemSpec& spec, const GridConfig& cfg, double tau, Center&& center) {
  if (spec.cost.running.is_zero || tau <= 0.0) return 0.0;
  std::vector<double> breaks = activation_breaks(spec, tau);
  if (tau > spec.d) breaks.push_back(tau - spec.d);
  std::sort(breaks.begin(), breaks.end());
  const TimeRule tr = singular_time_rule(tau, cfg.theta_order, breaks);
  const QuadratureSpec q = quad_spec(cfg);
  double acc = 0.0;
  for (std::size_t r = 0; r < tr.s.size(); ++r) {
    const double s = tr.s[r];
    const GaussKernel k = make_kernel(tau - s, gramian(tau - s, spec.a0, spec.sigma), q);
    const VectorXd c = center(s);
    acc += tr.w[r] * k.expect([&](const VectorXd& z) { return spec.cost.running.value(spec.T - s, c + z); });
  }
  return acc;
}

void check_time(const ProblemSpec& spec, double t) {
  if (!(t >= 0.0 && t <= spec.T)) {
    std::ostringstream msg;
    msg << "t = " << t << " outside [0, " << spec.T << "]";
    throw DomainError("hjb", msg.str());
  }
}

}  // namespace

int ReducedValueField::node_count() const {
  int c = 1;
  for (int a = 0; a < n; ++a) c *= nodes_per_axis;
  return c;
}

VectorXd ReducedValueField::node(int j) const {
  VectorXd y(n);
  for (int a = 0; a < n; ++a) {
    y(a) = lo(a) + step(a) * (j % nodes_per_axis);
    j /= nodes_per_axis;
  }
  return y;
}

ReducedValueField::TimeLookup ReducedValueField::lookup(double t) const {
  TimeLookup lk;
  const int K = static_cast<int>(times.size());
  if (t >= times.back()) {
    lk.a = lk.b = lk.idx[0] = K - 1;
    return lk;
  }
  if (t <= 0.0) return lk;
  const int a = static_cast<int>(std::upper_bound(times.begin(), times.end(), t) - times.begin()) - 1;
  lk.a = a;
  lk.b = a + 1;
  const double ta = times[a], tb = times[a + 1];
  lk.lambda_lin = (t - ta) / (tb - ta);
  lk.lambda_sqrt = (std::sqrt(t) - std::sqrt(ta)) / (std::sqrt(tb) - std::sqrt(ta));
  // Smooth segment around the bracket: left-limit copies close a segment.
  int lo = a, hi = a + 1;
  while (lo > 0 && !left_limit[lo - 1]) --lo;
  while (hi < K - 1 && !left_limit[hi]) ++hi;
  lk.count = std::min(4, hi - lo + 1);
  const int start = std::clamp(a - 1, lo, hi - lk.count + 1);
  for (int k = 0; k < lk.count; ++k) lk.idx[k] = start + k;
  auto weights = [&](auto&& x, std::array<double, 4>& w) {
    for (int k = 0; k < lk.count; ++k) {
      double p = 1.0;
      for (int l = 0; l < lk.count; ++l) {
        if (l != k) p *= (x(t) - x(times[lk.idx[l]])) / (x(times[lk.idx[k]]) - x(times[lk.idx[l]]));
      }
      w[k] = p;
    }
  };
  weights([](double u) { return u; }, lk.wf);
  weights([](double u) { return std::sqrt(u); }, lk.wg);
  return lk;
}

VectorXd ReducedValueField::interp(const MatrixXd& slice, const VectorXd& y) const {
  Stencil st;
  make_stencil(*this, y, st);
  VectorXd out = VectorXd::Zero(slice.rows());
  for (int c = 0; c < st.size; ++c) out += st.w[c] * slice.col(st.idx[c]);
  return out;
}

MatrixXd ReducedValueField::interp_jacobian(const MatrixXd& slice, const VectorXd& y) const {
  AxisWeights ax[3];
  for (int a = 0; a < n; ++a) ax[a] = axis_weights(*this, a, y(a));
  MatrixXd J = MatrixXd::Zero(slice.rows(), n);
  const int size = 1 << (2 * n);
  for (int c = 0; c < size; ++c) {
    int idx = 0, stride = 1;
    for (int a = 0; a < n; ++a) {
      idx += (ax[a].base + ((c >> (2 * a)) & 3)) * stride;
      stride *= nodes_per_axis;
    }
    for (int d = 0; d < n; ++d) {
      double w = 1.0;
      for (int a = 0; a < n; ++a) {
        const int k = (c >> (2 * a)) & 3;
        w *= a == d ? ax[a].dw[k] : ax[a].w[k];
      }
      J.col(d) += w * slice.col(idx);
    }
  }
  return J;
}

double ReducedValueField::value(double t, const VectorXd& y) const {
  const TimeLookup lk = lookup(t);
  double out = 0.0;
  for (int k = 0; k < lk.count; ++k) out += lk.wf[k] * interp(f[lk.idx[k]].transpose(), y)(0);
  return out;
}

VectorXd ReducedValueField::bgrad(double t, const VectorXd& y) const {
  const TimeLookup lk = lookup(t);
  VectorXd out = VectorXd::Zero(m);
  for (int k = 0; k < lk.count; ++k) out += lk.wg[k] * interp(fbar[lk.idx[k]], y);
  return out;
}

MatrixXd ReducedValueField::bgrad_jacobian(double t, const VectorXd& y) const {
  const TimeLookup lk = lookup(t);
  MatrixXd out = MatrixXd::Zero(m, n);
  for (int k = 0; k < lk.count; ++k) out += lk.wg[k] * interp_jacobian(fbar[lk.idx[k]], y);
  return out;
}

std::pair<VectorXd, VectorXd> default_bounds(const ProblemSpec& spec) {
  const AbstractState x = lift_initial(spec);
  // Uncontrolled noise-free curve tau -> (e^{tau A} x)_0.
  VectorXd cmin = VectorXd::Constant(spec.n, kInf), cmax = VectorXd::Constant(spec.n, -kInf);
  for (int i = 0; i <= 20; ++i) {
    const VectorXd c = reduced_coordinate(spec.T * i / 20.0, x, spec.a0);
    cmin = cmin.cwiseMin(c);
    cmax = cmax.cwiseMax(c);
  }
  const VectorXd center = 0.5 * (cmin + cmax);
  const double eT = op_norm(mat_exp(spec.T, spec.a0));
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(gramian(spec.T, spec.a0, spec.sigma));
  double half = 0.5 * (cmax - cmin).maxCoeff() + 6.0 * std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
  // Room for what the controls can add over the horizon.
  if (spec.U.compact()) half += spec.T * eT * (op_norm(spec.b0) + spec.b1.total_variation()) * spec.U.max_norm();
  half = std::max(half, 1.0);
  return {center.array() - half, center.array() + half};
}

SolveResult picard_solve(const ProblemSpec& spec, const GridConfig& grid, const SolveOptions& opts) {
  return solve_on(spec, grid, opts);
}

double weighted_norm(const ReducedValueField& field, double eta) {
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < field.times.size(); ++i) {
    const double e = std::exp(-eta * field.times[i]);
    a = std::max(a, e * field.f[i].cwiseAbs().maxCoeff());
    if (field.fbar[i].size() > 0) b = std::max(b, e * field.fbar[i].colwise().norm().maxCoeff());
  }
  return a + b;
}

RunningDiscrepancy running_discrepancy(const ProblemSpec& spec, const ReducedValueField& field, double t,
                                       const AbstractState& x) {
  check_time(spec, t);
  const GridConfig cfg = resolve(field.config, spec.n);
  const double tau = spec.T - t;
  const VectorXd y = reduced_coordinate(tau, x, spec.a0);
  RunningDiscrepancy out;
  out.pullback = running_integral(spec, cfg, tau, [&](double s) { return (mat_exp(-s, spec.a0) * y).eval(); });
  out.exact = running_integral(spec, cfg, tau, [&](double s) { return reduced_coordinate(tau - s, x, spec.a0); });
  return out;
}

double evaluate_v(const ProblemSpec& spec, const ReducedValueField& field, double t, const AbstractState& x,
                  bool exact_running) {
  check_time(spec, t);
  const double tau = spec.T - t;
  if (tau <= 0.0) return spec.cost.terminal.value(x.x0);
  const double v = field.value(tau, reduced_coordinate(tau, x, spec.a0));
  if (!exact_running || field.running_pullback_exact) return v;
  return v - running_discrepancy(spec, field, t, x).difference();
}

VectorXd grad_B_v(const ProblemSpec& spec, const ReducedValueField& field, double t, const AbstractState& x) {
  check_time(spec, t);
  const double tau = spec.T - t;
  if (tau <= 0.0) throw SingularityError("hjb", "grad^B v is not defined at t = T in the weighted space");
  return field.bgrad(tau, reduced_coordinate(tau, x, spec.a0)) / std::sqrt(tau);
}

SecondDerivative grad_B_grad_v(const ProblemSpec& spec, const ReducedValueField& field, double t,
                               const AbstractState& x, int quad_order) {
  check_time(spec, t);
  const GridConfig cfg = resolve(field.config, spec.n);
  const double tau = spec.T - t;
  SecondDerivative out;
  const auto& grad_phi = spec.cost.terminal.gradient;
  out.terminal_differentiable = static_cast<bool>(grad_phi);
  if (tau <= 0.0) {
    if (!grad_phi) throw SingularityError("hjb", "second derivative at t = T needs a differentiable terminal cost");
    // Hessian of phi by centered differences of its gradient, times (B)_0.
    MatrixXd H(spec.n, spec.n);
    const double hstep = 1e-5;
    for (int a = 0; a < spec.n; ++a) {
      VectorXd yp = x.x0, ym = x.x0;
      yp(a) += hstep;
      ym(a) -= hstep;
      H.col(a) = (grad_phi(yp) - grad_phi(ym)) / (2 * hstep);
    }
    out.grad_of_bgrad = out.bgrad_of_grad = 0.5 * (H + H.transpose()) * etAB0(0.0, spec);
    return out;
  }
  QuadratureSpec q = quad_spec(cfg);
  if (quad_order > 0) q.order = quad_order;
  const VectorXd y = reduced_coordinate(tau, x, spec.a0);
  const MatrixXd D = etAB0(tau, spec);
  const GaussKernel K = make_kernel(tau, gramian(tau, spec.a0, spec.sigma), q);
  const bool invertible = K.rank() == spec.n;
  if (grad_phi) {
    out.grad_of_bgrad = smooth_hess_B(K, grad_phi, y, D, HessOrdering::kGradOfBGrad);
    out.bgrad_of_grad = invertible ? smooth_hess_B(K, grad_phi, y, D, HessOrdering::kBGradOfGrad) : out.grad_of_bgrad;
  } else {
    out.grad_of_bgrad = smooth_hess_B_kernel(K, spec.cost.terminal.value, y, D);
    out.bgrad_of_grad = out.grad_of_bgrad;
  }
  // Convolution term: g(s, w) = H_min(s^{-1/2} fbar(s, w)) + l0(T - s, e^{-s a0} w).
  const Hamiltonian h(spec.U, spec.cost.control);
  const TimeRule tr = singular_time_rule(tau, cfg.theta_order, activation_breaks(spec, tau));
  const bool split = spec.n >= 2 && psd_factor(spec.sigma * spec.sigma.transpose()).rank < spec.n;
  for (std::size_t r = 0; r < tr.s.size(); ++r) {
    const double s = tr.s[r];
    const MatrixXd eneg = mat_exp(-s, spec.a0);
    const GaussKernel ks = make_kernel(tau - s, cross_covariance(tau, s, spec), q);
    VectorField grad_g = [&](const VectorXd& w) {
      const VectorXd p = field.bgrad(s, w) / std::sqrt(s);
      VectorXd g = field.bgrad_jacobian(s, w).transpose() * h.gamma(p) / std::sqrt(s);
      if (!spec.cost.running.is_zero && spec.cost.running.gradient) {
        g += eneg.transpose() * spec.cost.running.gradient(spec.T - s, eneg * w);
      }
      return g;
    };
    if (split) {
      // Same split as the solver: kernel for e^{s a0} D_{tau-s}, the rest
      // through a difference Hessian of g.
      const MatrixXd shift = mat_exp(s, spec.a0) * etAB0(tau - s, spec);
      const double hstep = 1e-4;
      MatrixXd hess = MatrixXd::Zero(spec.n, spec.n);
      for (Eigen::Index j = 0; j < ks.nodes.cols(); ++j) {
        for (int a = 0; a < spec.n; ++a) {
          VectorXd wp = y + ks.nodes.col(j), wm = wp;
          wp(a) += hstep;
          wm(a) -= hstep;
          hess.col(a) += ks.rule.weights(j) * (grad_g(wp) - grad_g(wm)) / (2 * hstep);
        }
      }
      out.grad_of_bgrad += tr.w[r] * (smooth_hess_B(ks, grad_g, y, shift, HessOrdering::kGradOfBGrad) +
                                      hess * (D - shift));
      out.bgrad_of_grad += tr.w[r] * smooth_hess_B(ks, grad_g, y, D, HessOrdering::kBGradOfGrad);
      continue;
    }
    out.grad_of_bgrad += tr.w[r] * smooth_hess_B(ks, grad_g, y, D, HessOrdering::kGradOfBGrad);
    out.bgrad_of_grad += tr.w[r] * (ks.rank() == spec.n
                                        ? smooth_hess_B(ks, grad_g, y, D, HessOrdering::kBGradOfGrad)
                                        : smooth_hess_B(ks, grad_g, y, D, HessOrdering::kGradOfBGrad));
  }
  out.asymmetry = (out.grad_of_bgrad - out.bgrad_of_grad).cwiseAbs().maxCoeff();
  return out;
}

ScalarField mollify(const ScalarField& phi, int n, double eps, int order) {
  QuadratureSpec q;
  q.kind = QuadratureSpec::Kind::kGaussHermite;
  q.order = order;
  const NormalRule rule = make_normal_rule(n, q);
  return [phi, rule, eps](const VectorXd& y) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < rule.points.cols(); ++j) acc += rule.weights(j) * phi(y + eps * rule.points.col(j));
    return acc;
  };
}

MollifiedSequence mollified_sequence(const ProblemSpec& spec, int levels, const GridConfig& grid,
                                     const SolveOptions& opts, std::optional<VectorXd> box_lo,
                                     std::optional<VectorXd> box_hi) {
  MollifiedSequence out;
  out.base = picard_solve(spec, grid, opts);
  const ReducedValueField& bf = out.base.field;
  GridConfig fixed = bf.config;
  fixed.lo = bf.lo;
  fixed.hi = bf.hi;
  out.box_lo = box_lo ? *box_lo : (0.75 * bf.lo + 0.25 * bf.hi).eval();
  out.box_hi = box_hi ? *box_hi : (0.25 * bf.lo + 0.75 * bf.hi).eval();
  const int order = spec.n == 1 ? 20 : (spec.n == 2 ? 10 : 6);
  std::vector<int> inside;
  for (int j = 0; j < bf.node_count(); ++j) {
    const VectorXd y = bf.node(j);
    if ((y.array() >= out.box_lo.array()).all() && (y.array() <= out.box_hi.array()).all()) inside.push_back(j);
  }
  for (int level = 1; level <= levels; ++level) {
    const double eps = std::ldexp(1.0, -level);
    ProblemSpec sn = spec;
    sn.cost.terminal.value = mollify(spec.cost.terminal.value, spec.n, eps, order);
    if (spec.cost.terminal.gradient) {
      QuadratureSpec q;
      q.kind = QuadratureSpec::Kind::kGaussHermite;
      q.order = order;
      const NormalRule rule = make_normal_rule(spec.n, q);
      sn.cost.terminal.gradient = [g = spec.cost.terminal.gradient, rule, eps](const VectorXd& y) {
        VectorXd acc = VectorXd::Zero(y.size());
        for (Eigen::Index j = 0; j < rule.points.cols(); ++j) acc += rule.weights(j) * g(y + eps * rule.points.col(j));
        return acc;
      };
    }
    if (!spec.cost.running.spatially_constant) {
      const auto l0 = spec.cost.running.value;
      const int n = spec.n;
      sn.cost.running.value = [l0, n, eps, order](double t, const VectorXd& y) {
        return mollify([&](const VectorXd& z) { return l0(t, z); }, n, eps, order)(y);
      };
    }
    MollifiedLevel lv;
    lv.width = eps;
    lv.solve = picard_solve(sn, fixed, opts);
    const ReducedValueField& f = lv.solve.field;
    for (std::size_t i = 0; i < f.times.size(); ++i) {
      lv.sup_value = std::max(lv.sup_value, f.f[i].cwiseAbs().maxCoeff());
      for (int j : inside) {
        lv.dist_value = std::max(lv.dist_value, std::abs(f.f[i](j) - bf.f[i](j)));
        lv.dist_grad = std::max(lv.dist_grad, (f.fbar[i].col(j) - bf.fbar[i].col(j)).norm());
      }
    }
    out.levels.push_back(std::move(lv));
  }
  return out;
}

}  // namespace delayctl
