#include "delayctl/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "delayctl/errors.hpp"
#include "delayctl/hamiltonian.hpp"
#include "delayctl/linalg.hpp"
#include "delayctl/operators.hpp"
#include "delayctl/quadrature.hpp"

namespace delayctl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t path_seed(std::uint64_t seed, int path) {
  return splitmix64(splitmix64(seed) ^ (0xD1B54A32D192ED03ULL * (static_cast<std::uint64_t>(path) + 1)));
}

// int_a^b density(xi) dxi, exact for piecewise constant and piecewise linear densities.
MatrixXd density_integral(const DelayMeasure& b1, double a, double b) {
  MatrixXd out = MatrixXd::Zero(b1.n(), b1.m());
  a = std::max(a, -b1.d());
  b = std::min(b, 0.0);
  if (!b1.has_density() || b <= a) return out;
  std::vector<double> cuts{a};
  for (double k : b1.knots()) {
    if (k > a && k < b) cuts.push_back(k);
  }
  cuts.push_back(b);
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double lo = cuts[i], hi = cuts[i + 1], h = 0.5 * (hi - lo), c = 0.5 * (hi + lo);
    const double off = h / std::sqrt(3.0);
    out += h * (b1.density(c - off) + b1.density(c + off));
  }
  return out;
}

// b1([-d, xi)), atoms included.
MatrixXd cumulative(const DelayMeasure& b1, double xi) {
  MatrixXd out = density_integral(b1, -b1.d(), xi);
  for (const auto& atom : b1.atoms()) {
    if (atom.location < xi) out += atom.weight;
  }
  return out;
}

struct Grid {
  double dt = 0.0;
  int N = 0;  // steps on [0, T]
  int L = 0;  // history steps, L dt >= d
  std::vector<std::string> notes;
};

Grid make_grid(const ProblemSpec& spec, double dt) {
  if (!(dt > 0.0) || dt > spec.T) throw ValidationError("simulate", "dt must lie in (0, T]");
  Grid g;
  const int N0 = static_cast<int>(std::ceil(spec.T / dt - 1e-9));
  g.N = N0;
  // Prefer a step that divides d as well, so atoms sit on the grid.
  for (int N = N0; N <= 4 * N0; ++N) {
    const double r = spec.d * N / spec.T;
    if (std::abs(r - std::round(r)) < 1e-9 * std::max(1.0, r)) {
      g.N = N;
      break;
    }
  }
  g.dt = spec.T / g.N;
  const double r = spec.d / g.dt;
  if (std::abs(r - std::round(r)) > 1e-9 * std::max(1.0, r)) {
    g.notes.push_back("no step near the requested dt divides both T and d; atoms are looked up off-grid");
  }
  if (std::abs(g.dt - dt) > 1e-12 * dt) g.notes.push_back("dt adjusted from " + std::to_string(dt) + " to " + std::to_string(g.dt));
  g.L = static_cast<int>(std::ceil(spec.d / g.dt - 1e-9));
  return g;
}

// Path-independent pieces of the scheme. Columns of the n x (L m) blocks are
// ordered by time: block c multiplies u_{k-L+c}.
struct Scheme {
  Grid grid;
  MatrixXd E;                    // density weights of the Euler drift
  std::vector<MatrixXd> W;       // W[j]: past controls -> (e^{j dt A} x)_0, j = 0..L
  std::vector<MatrixXd> expTau;  // e^{tau_k a0}, tau_k = T - t_k
  std::vector<MatrixXd> expRest; // e^{(tau_k - L dt) a0} for tau_k > L dt
  struct AtomLookup {
    MatrixXd weight;
    int jrel = 0;  // u index offset from k
    double loc = 0.0;
  };
  std::vector<AtomLookup> atoms;
  bool has_b1 = false;
  MatrixXd prehistory;  // m x L, cell averages of u0, column c for index c - L
};

Scheme make_scheme(const ProblemSpec& spec, const Grid& g) {
  Scheme s;
  s.grid = g;
  const int n = spec.n, m = spec.m, L = g.L;
  const double dt = g.dt, d = spec.d;
  s.has_b1 = spec.b1.has_density() || spec.b1.has_atoms();
  s.E = MatrixXd::Zero(n, L * m);
  s.W.assign(L + 1, MatrixXd::Zero(n, L * m));
  if (s.has_b1) {
    for (int l = 1; l <= L; ++l) {
      s.E.middleCols((L - l) * m, m) = density_integral(spec.b1, -l * dt, -(l - 1) * dt);
    }
    for (const auto& atom : spec.b1.atoms()) {
      Scheme::AtomLookup a;
      a.weight = atom.weight;
      a.loc = atom.location;
      a.jrel = static_cast<int>(std::floor(atom.location / dt + 1e-9));
      s.atoms.push_back(a);
    }
    // V_q = int_0^dt e^{(dt - rho) a0} b1([-q dt - rho, -(q-1) dt - rho)) drho,
    // the increment of W_{., l} from horizon j dt to (j+1) dt when q = j + l.
    std::vector<double> bps = spec.b1.breakpoints();
    bps.push_back(-d);
    bps.push_back(0.0);
    const Rule1D gl = gauss_legendre(4);
    std::vector<MatrixXd> V(2 * L + 2, MatrixXd::Zero(n, m));
    for (int q = 1; q <= 2 * L + 1; ++q) {
      if ((q - 1) * dt >= d + dt) break;
      std::vector<double> cuts{0.0, dt};
      for (double b : bps) {
        for (double r : {-(q - 1) * dt - b, -q * dt - b}) {
          if (r > 1e-14 * dt && r < dt * (1.0 - 1e-14)) cuts.push_back(r);
        }
      }
      std::sort(cuts.begin(), cuts.end());
      for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double lo = cuts[i], hi = cuts[i + 1];
        if (hi - lo <= 0.0) continue;
        for (std::size_t j = 0; j < gl.nodes.size(); ++j) {
          const double rho = 0.5 * (lo + hi) + 0.5 * (hi - lo) * gl.nodes[j];
          const MatrixXd window = cumulative(spec.b1, -(q - 1) * dt - rho) - cumulative(spec.b1, -q * dt - rho);
          V[q] += 0.5 * (hi - lo) * gl.weights[j] * mat_exp(dt - rho, spec.a0) * window;
        }
      }
    }
    const MatrixXd step = mat_exp(dt, spec.a0);
    for (int j = 0; j < L; ++j) {
      s.W[j + 1] = step * s.W[j];
      for (int l = 1; l <= L && j + l <= 2 * L + 1; ++l) s.W[j + 1].middleCols((L - l) * m, m) += V[j + l];
    }
  }
  s.expTau.resize(g.N + 1);
  s.expRest.resize(g.N + 1);
  for (int k = 0; k <= g.N; ++k) {
    const double tau = (g.N - k) * dt;
    s.expTau[k] = mat_exp(tau, spec.a0);
    if (g.N - k > L) s.expRest[k] = mat_exp(tau - L * dt, spec.a0);
  }
  // Cell averages of u0 on [j dt, (j+1) dt), j = -L..-1, clipped to [-d, 0).
  s.prehistory = MatrixXd::Zero(m, L);
  const Rule1D gl = gauss_legendre(4);
  for (int c = 0; c < L; ++c) {
    const double lo = std::max(-d, (c - L) * dt), hi = std::min(0.0, (c - L + 1) * dt);
    if (hi <= lo) continue;
    VectorXd acc = VectorXd::Zero(m);
    for (std::size_t j = 0; j < gl.nodes.size(); ++j) {
      acc += 0.5 * gl.weights[j] * spec.initial.u0.value(0.5 * (lo + hi) + 0.5 * (hi - lo) * gl.nodes[j]);
    }
    s.prehistory.col(c) = acc;
  }
  return s;
}

}  // namespace

Policy Policy::feedback(const ReducedValueField& field, std::optional<double> cutoff) {
  Policy p;
  p.kind = Kind::kFeedback;
  p.name = "feedback";
  p.field = &field;
  p.cutoff = cutoff;
  return p;
}

Policy Policy::constant(const VectorXd& u, std::string name) {
  Policy p;
  p.kind = Kind::kConstant;
  p.u = u;
  if (name.empty()) {
    name = "u=";
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%s%g", i ? "," : "", u(i));
      name += buf;
    }
  }
  p.name = std::move(name);
  return p;
}

Policy Policy::open_loop(std::function<VectorXd(double)> schedule, std::string name) {
  Policy p;
  p.kind = Kind::kOpenLoop;
  p.schedule = std::move(schedule);
  p.name = std::move(name);
  return p;
}

Policy random_open_loop(const ControlSet& U, double T, std::uint64_t seed, int pieces) {
  if (pieces < 1) throw ValidationError("simulate", "random open-loop policy needs at least one piece");
  std::mt19937_64 rng(splitmix64(seed));
  std::vector<VectorXd> values;
  for (int i = 0; i < pieces; ++i) {
    if (U.kind() == ControlSet::Kind::kFinite) {
      std::uniform_int_distribution<std::size_t> pick(0, U.points().size() - 1);
      values.push_back(U.points()[pick(rng)]);
      continue;
    }
    VectorXd u(U.dim());
    for (int a = 0; a < U.dim(); ++a) {
      std::uniform_real_distribution<double> unif(std::max(U.lo()(a), -1.0), std::min(U.hi()(a), 1.0));
      u(a) = unif(rng);
    }
    values.push_back(u);
  }
  return Policy::open_loop(
      [values, T, pieces](double t) {
        const int i = std::clamp(static_cast<int>(std::floor(t / T * pieces)), 0, pieces - 1);
        return values[i];
      },
      "random open-loop");
}

std::vector<Policy> constant_sweep(const ControlSet& U, int count) {
  int per_axis = count;
  if (U.dim() > 1) per_axis = std::max(2, static_cast<int>(std::lround(std::pow(count, 1.0 / U.dim()))));
  std::vector<Policy> out;
  for (const VectorXd& u : U.sample(per_axis, 1.0)) out.push_back(Policy::constant(u));
  return out;
}

TrajectoryBatch integrate(const ProblemSpec& spec, const Policy& policy, const SimOptions& opts) {
  spec.validate();
  if (opts.n_paths < 1) throw ValidationError("simulate", "n_paths must be positive");
  if (opts.thin < 1) throw ValidationError("simulate", "thin must be positive");
  const bool feedback = policy.kind == Policy::Kind::kFeedback;
  if (feedback && policy.field == nullptr) throw ValidationError("simulate", "feedback policy needs a solved field");
  if (policy.kind == Policy::Kind::kConstant && policy.u.size() != spec.m) {
    throw ValidationError("simulate", "constant control has the wrong dimension");
  }
  if (policy.kind == Policy::Kind::kOpenLoop && !policy.schedule) {
    throw ValidationError("simulate", "open-loop policy has no schedule");
  }
  const Hamiltonian ham(spec.U, spec.cost.control);
  if (feedback && !ham.lipschitz_selection()) {
    throw ValidationError("simulate", "feedback needs a Lipschitz selection gamma; certify it in the control cost");
  }
  const ReducedValueField* idf = opts.identity_field;

  const Grid g = make_grid(spec, opts.dt);
  const Scheme sc = make_scheme(spec, g);
  const int n = spec.n, m = spec.m, N = g.N, L = g.L;
  const double dt = g.dt, sdt = std::sqrt(dt), T = spec.T;

  TrajectoryBatch b;
  b.policy = policy.name;
  b.dt = dt;
  b.dt_requested = opts.dt;
  b.steps = N;
  b.lag = L;
  b.n_paths = opts.n_paths;
  b.seed = opts.seed;
  b.cutoff = feedback ? policy.cutoff.value_or(2.0 * dt) : 0.0;
  b.notes = g.notes;
  b.running = VectorXd::Zero(opts.n_paths);
  b.control = VectorXd::Zero(opts.n_paths);
  b.terminal = VectorXd::Zero(opts.n_paths);
  if (idf) b.identity = VectorXd::Zero(opts.n_paths);
  for (int k = 0; k <= N; k += opts.thin) b.sample_times.push_back(k * dt);
  if (N % opts.thin != 0) b.sample_times.push_back(T);
  std::vector<int> snap_idx;
  for (double t : opts.snapshots) {
    if (t < 0.0 || t > T + 1e-12) throw DomainError("simulate", "snapshot time outside [0, T]");
    snap_idx.push_back(std::clamp(static_cast<int>(std::lround(t / dt)), 0, N));
    b.snapshot_times.push_back(snap_idx.back() * dt);
    b.snapshots.push_back(MatrixXd::Zero(n, opts.n_paths));
  }

  // History buffer: u_j for j = -L..N-1 at offset (j + L) m.
  VectorXd hist_template = VectorXd::Zero((L + N) * m);
  for (int c = 0; c < L; ++c) hist_template.segment(c * m, m) = sc.prehistory.col(c);

  auto u_point = [&](const VectorXd& hist, int k, const Scheme::AtomLookup& a) -> VectorXd {
    const int j = k + a.jrel;
    if (j >= 0) return hist.segment((j + L) * m, m);
    const double s = std::clamp(k * dt + a.loc, -spec.d, 0.0);
    return spec.initial.u0.value(s);
  };
  auto delay_drift = [&](const VectorXd& hist, int k, VectorXd& out) {
    out.setZero();
    if (!sc.has_b1) return;
    out.noalias() += sc.E * hist.segment(k * m, L * m);
    for (const auto& a : sc.atoms) out.noalias() += a.weight * u_point(hist, k, a);
  };
  // (e^{tau_k A} x_k)_0 from y_k and the buffer.
  auto reduced = [&](const VectorXd& hist, int k, const VectorXd& y, VectorXd& out) {
    out.noalias() = sc.expTau[k] * y;
    if (!sc.has_b1) return;
    const int j = N - k;
    if (j <= L) {
      out.noalias() += sc.W[j] * hist.segment(k * m, L * m);
    } else {
      out.noalias() += sc.expRest[k] * (sc.W[L] * hist.segment(k * m, L * m));
    }
  };

  // Deterministic policies: controls, delay drift and the control part of
  // the reduced coordinate are shared by all paths.
  const bool shared = !feedback;
  std::vector<VectorXd> shared_drift, shared_red;
  VectorXd shared_hist = hist_template;
  double shared_control_cost = 0.0;
  if (shared) {
    for (int k = 0; k < N; ++k) {
      VectorXd u = policy.kind == Policy::Kind::kConstant ? policy.u : policy.schedule(k * dt);
      if (u.size() != m) throw ValidationError("simulate", "open-loop schedule returned the wrong dimension");
      if (!spec.U.contains(u)) {
        u = spec.U.project(u);
        b.projections += opts.n_paths;
      }
      shared_hist.segment((k + L) * m, m) = u;
      shared_control_cost += spec.cost.control.value(u) * dt;
    }
    shared_drift.assign(N, VectorXd::Zero(n));
    shared_red.assign(N, VectorXd::Zero(n));
    const VectorXd zero = VectorXd::Zero(n);
    for (int k = 0; k < N; ++k) {
      delay_drift(shared_hist, k, shared_drift[k]);
      reduced(shared_hist, k, zero, shared_red[k]);
    }
  }

  const Rule1D gl3 = gauss_legendre(3);
  const bool with_running = !spec.cost.running.is_zero;
  const RunningCost& l0 = spec.cost.running;
  VectorXd y(n), y_next(n), drift(n), red(n), xi(spec.k), u(m), p(m), g_bar(m);
  VectorXd uq(m);
  for (int path = 0; path < opts.n_paths; ++path) {
    std::mt19937_64 rng(path_seed(opts.seed, path));
    std::normal_distribution<double> normal;
    VectorXd hist = shared ? shared_hist : hist_template;
    y = spec.initial.y0;
    const bool record = path < opts.record_paths;
    MatrixXd rec_y, rec_u;
    if (record) {
      rec_y = MatrixXd::Zero(n, static_cast<Eigen::Index>(b.sample_times.size()));
      rec_u = MatrixXd::Zero(m, static_cast<Eigen::Index>(b.sample_times.size()));
    }
    double running = 0.0, control_cost = 0.0, identity = 0.0;
    double l0_prev = with_running ? l0.value(0.0, y) : 0.0;
    int sample = 0;
    for (int k = 0; k < N; ++k) {
      const double t = k * dt, tau = T - t;
      for (std::size_t s = 0; s < snap_idx.size(); ++s) {
        if (snap_idx[s] == k) b.snapshots[s].col(path) = y;
      }
      const bool need_red = feedback || idf;
      if (need_red) {
        if (shared) {
          red.noalias() = sc.expTau[k] * y;
          red += shared_red[k];
        } else {
          reduced(hist, k, y, red);
        }
      }
      if (idf) g_bar = idf->bgrad(tau, red);
      if (feedback) {
        if (tau > b.cutoff + 1e-12 * T || k == 0) {
          const VectorXd gf = idf == policy.field ? g_bar : policy.field->bgrad(tau, red);
          p = gf / std::sqrt(tau);
          const double hmin = ham.minimize_into(p, u);
          if (!spec.U.contains(u)) {
            u = spec.U.project(u);
            ++b.projections;
          }
          const double gap = std::abs(ham.h_cv(p, u) - hmin);
          b.max_feedback_integrand = std::max(b.max_feedback_integrand, gap);
        } else {
          u = hist.segment((k - 1 + L) * m, m);
        }
        hist.segment((k + L) * m, m) = u;
        control_cost += spec.cost.control.value(u) * dt;
      } else {
        u = hist.segment((k + L) * m, m);
      }
      if (idf) {
        // p(tau') = g / sqrt(tau') over the step with g frozen; exact in the
        // linear part, Gauss-Legendre in sqrt(tau') for H_min.
        const double sa = std::sqrt(tau), sb = std::sqrt(std::max(tau - dt, 0.0));
        double hint = 0.0;
        for (std::size_t j = 0; j < gl3.nodes.size(); ++j) {
          const double sig = 0.5 * (sa + sb) + 0.5 * (sa - sb) * gl3.nodes[j];
          p = g_bar / sig;
          hint += 0.5 * (sa - sb) * gl3.weights[j] * 2.0 * sig * ham.minimize_into(p, uq);
        }
        identity += hint - 2.0 * (sa - sb) * g_bar.dot(u) - spec.cost.control.value(u) * dt;
      }
      if (record && k % opts.thin == 0) {
        rec_y.col(sample) = y;
        rec_u.col(sample) = u;
        ++sample;
      }
      if (shared) {
        drift = shared_drift[k];
      } else {
        delay_drift(hist, k, drift);
      }
      for (int i = 0; i < spec.k; ++i) xi(i) = normal(rng);
      y_next = y + (spec.a0 * y + spec.b0 * u + drift) * dt + sdt * (spec.sigma * xi);
      y.swap(y_next);
      if (with_running) {
        const double l0_next = l0.value(t + dt, y);
        running += 0.5 * dt * (l0_prev + l0_next);
        l0_prev = l0_next;
      }
    }
    for (std::size_t s = 0; s < snap_idx.size(); ++s) {
      if (snap_idx[s] == N) b.snapshots[s].col(path) = y;
    }
    if (record) {
      if (sample < rec_y.cols()) {
        rec_y.col(sample) = y;
        rec_u.col(sample) = hist.segment((N - 1 + L) * m, m);
      }
      b.paths.push_back(rec_y);
      b.controls.push_back(rec_u);
    }
    b.running(path) = running;
    b.control(path) = shared ? shared_control_cost : control_cost;
    b.terminal(path) = spec.cost.terminal.value(y);
    if (idf) b.identity(path) = identity;
    if (!std::isfinite(b.running(path) + b.control(path) + b.terminal(path))) {
      throw NumericError("simulate", "non-finite cost on path " + std::to_string(path));
    }
  }
  if (b.projections > 0) b.notes.push_back(std::to_string(b.projections) + " controls projected onto U");
  return b;
}

Estimate mean_se(const VectorXd& samples) {
  Estimate e;
  const auto N = samples.size();
  if (N == 0) return e;
  e.mean = samples.mean();
  // Identical samples (deterministic runs) give an exact zero.
  if (N > 1 && samples.maxCoeff() > samples.minCoeff()) e.se = std::sqrt((samples.array() - e.mean).square().sum() / static_cast<double>(N - 1) / N);
  return e;
}

Estimate estimate_cost(const TrajectoryBatch& batch) { return mean_se(batch.cost()); }

IdentityResult fundamental_identity_residual(const ProblemSpec& spec, const ReducedValueField& field,
                                             const Policy& policy, const SimOptions& opts) {
  SimOptions o = opts;
  o.identity_field = &field;
  const TrajectoryBatch b = integrate(spec, policy, o);
  IdentityResult r;
  r.v = evaluate_v(spec, field, 0.0, lift_initial(spec));
  const VectorXd J = b.cost();
  r.J = mean_se(J);
  r.integral = mean_se(b.identity);
  r.residual = mean_se((J + b.identity).array() - r.v);
  r.gap = mean_se(J.array() - r.v);
  r.max_feedback_integrand = b.max_feedback_integrand;
  r.projections = b.projections;
  r.dt = b.dt;
  return r;
}

Ranking compare_policies(const ProblemSpec& spec, const ReducedValueField& field,
                         const std::vector<Policy>& candidates, const SimOptions& opts) {
  SimOptions o = opts;
  o.identity_field = nullptr;
  o.record_paths = 0;
  o.snapshots.clear();
  Ranking r;
  r.v = evaluate_v(spec, field, 0.0, lift_initial(spec));
  r.n_paths = opts.n_paths;
  const TrajectoryBatch fb = integrate(spec, Policy::feedback(field), o);
  r.dt = fb.dt;
  const VectorXd Jf = fb.cost();
  const Estimate ef = mean_se(Jf);
  RankingRow first;
  first.name = "feedback";
  first.J = ef;
  first.gap = mean_se(Jf.array() - r.v);
  r.rows.push_back(first);
  r.feedback_dominates = true;
  for (const Policy& p : candidates) {
    if (p.kind == Policy::Kind::kFeedback) continue;
    const VectorXd J = integrate(spec, p, o).cost();
    RankingRow row;
    row.name = p.name;
    row.J = mean_se(J);
    row.gap = mean_se(J.array() - r.v);
    row.paired_diff = mean_se(Jf - J);
    row.pooled_se = std::hypot(ef.se, row.J.se);
    if (ef.mean > row.J.mean + 3.0 * row.pooled_se) r.feedback_dominates = false;
    r.rows.push_back(row);
  }
  r.feedback_consistent = std::abs(ef.mean - r.v) <= 3.0 * ef.se + 5.0 * r.dt;
  std::stable_sort(r.rows.begin(), r.rows.end(),
                   [](const RankingRow& a, const RankingRow& b) { return a.J.mean < b.J.mean; });
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    if (r.rows[i].name == "feedback") r.feedback_rank = static_cast<int>(i) + 1;
  }
  return r;
}

}  // namespace delayctl
