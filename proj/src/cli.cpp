#include "delayctl/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <sstream>

#include <CLI11.hpp>

#include "delayctl/field_io.hpp"
#include "delayctl/gaussian.hpp"
#include "delayctl/hypotheses.hpp"
#include "delayctl/operators.hpp"
#include "delayctl/simulate.hpp"

namespace delayctl {

namespace fs = std::filesystem;

namespace {

constexpr Command kCommands[] = {Command::kCheck,    Command::kSolve,  Command::kEvaluate,
                                 Command::kSimulate, Command::kVerify, Command::kSweep};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

void write_json(const fs::path& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ostringstream s;
  for (std::size_t i = 0; i < header.size(); ++i) s << (i ? "," : "") << header[i];
  s << '\n';
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) s << (i ? "," : "") << fmt(row[i]);
    s << '\n';
  }
  write_text(path, s.str());
}

std::vector<std::string> names(const std::string& prefix, int count) {
  std::vector<std::string> out;
  for (int i = 1; i <= count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

// key=value pairs separated by commas.
std::vector<std::pair<std::string, std::string>> key_values(const std::string& text, const std::string& flag) {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream s(text);
  std::string item;
  while (std::getline(s, item, ',')) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError(flag + ": expected key=value, got '" + item + "'");
    out.emplace_back(item.substr(0, eq), item.substr(eq + 1));
  }
  return out;
}

int positive_int(const std::string& v, const std::string& what) {
  try {
    std::size_t pos = 0;
    const int x = std::stoi(v, &pos);
    if (pos == v.size() && x > 0) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(what + ": expected a positive integer, got '" + v + "'");
}

double real(const std::string& v, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos == v.size() && std::isfinite(x)) return x;
  } catch (const std::exception&) {
  }
  throw ConfigError(what + ": expected a number, got '" + v + "'");
}

Json grid_json(const GridConfig& g) {
  Json j;
  j["nodes"] = g.nodes;
  j["time_steps"] = g.time_steps;
  j["time_grading"] = g.time_grading;
  j["theta_order"] = g.theta_order;
  j["quad_order"] = g.quad_order;
  j["lo"] = g.lo ? to_json(*g.lo) : Json();
  j["hi"] = g.hi ? to_json(*g.hi) : Json();
  return j;
}

Json meta(const RunConfig& c) {
  Json j;
  j["command"] = to_string(c.command);
  j["config_hash"] = config_hash(config_json(c));
  j["versions"] = version_tags();
  return j;
}

Json estimate_json(const Estimate& e) { return Json{{"mean", e.mean}, {"se", e.se}}; }

Json hypotheses_json(const HypothesisReport& r) {
  Json j;
  j["all_hold"] = r.all_hold();
  j["kalman"] = {{"controllable", r.kalman.controllable},
                 {"r", r.kalman.r ? Json(*r.kalman.r) : Json()},
                 {"rank", r.kalman.rank},
                 {"fitted_slope", r.kalman.fitted_slope}};
  j["image"] = {{"condition", to_string(r.image.condition)}, {"residual", r.image.residual}, {"detail", r.image.detail}};
  j["hamiltonian_method"] = r.hamiltonian_method;
  j["lipschitz"] = {{"L", r.lipschitz.L},
                    {"L_grad", r.lipschitz.L_grad},
                    {"L_upper", r.lipschitz.L_upper},
                    {"samples", r.lipschitz.samples}};
  j["lipschitz_selection"] = r.lipschitz_selection;
  Json costs = Json::array();
  for (const auto& c : r.costs) {
    costs.push_back({{"name", c.name},
                     {"sampled_min", c.sampled_min},
                     {"sampled_max", c.sampled_max},
                     {"declared_bound", c.declared_bound ? Json(*c.declared_bound) : Json()},
                     {"ok", c.ok}});
  }
  j["costs"] = costs;
  j["warnings"] = r.warnings;
  j["seed"] = r.seed;
  return j;
}

// Wall time is left out so that reruns give identical files.
Json solve_report_json(const SolveReport& r) {
  Json j;
  j["converged"] = r.converged;
  j["iterations"] = r.iterations;
  j["eta"] = r.eta;
  j["eta_initial"] = r.eta_initial;
  j["apriori_factor"] = r.apriori_factor;
  j["lipschitz"] = r.lipschitz;
  j["kernel_constant"] = r.kernel_constant;
  j["distances"] = r.distances;
  j["distances_unweighted"] = r.distances_unweighted;
  j["ratios"] = r.ratios;
  j["mild_residual"] = r.mild_residual;
  j["probe_residual"] = r.probe_residual;
  j["probe_residual_grad"] = r.probe_residual_grad;
  j["sup_f"] = r.sup_f;
  j["data_sup"] = std::isfinite(r.data_sup) ? Json(r.data_sup) : Json("inf");
  j["apriori_bound"] = std::isfinite(r.apriori_bound) ? Json(r.apriori_bound) : Json("inf");
  j["C_T"] = std::isfinite(r.C_T) ? Json(r.C_T) : Json("inf");
  j["notes"] = r.notes;
  return j;
}

ReducedValueField obtain_field(const ProblemSpec& spec, const RunConfig& c) {
  if (!c.field_path.empty()) return read_field(c.field_path);
  const auto t0 = std::chrono::steady_clock::now();
  SolveResult r = picard_solve(spec, c.grid);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::fprintf(stderr, "solved %s: %d iterations, eta %g, %.1f s\n", spec.name.c_str(), r.report.iterations,
               r.report.eta, secs);
  return std::move(r.field);
}

SimOptions sim_options(const RunConfig& c) {
  SimOptions o;
  o.dt = c.dt;
  o.n_paths = c.paths;
  o.seed = c.seed;
  return o;
}

Policy parse_policy(const std::string& text, const ProblemSpec& spec, const ReducedValueField* field,
                    std::uint64_t seed) {
  if (text == "feedback") {
    if (field == nullptr) throw ConfigError("feedback policy needs a solved field");
    return Policy::feedback(*field);
  }
  if (text == "random") return random_open_loop(spec.U, spec.T, seed);
  if (text.rfind("constant:", 0) == 0) {
    std::vector<double> vals;
    std::stringstream s(text.substr(9));
    std::string item;
    while (std::getline(s, item, ',')) vals.push_back(real(item, "--policy"));
    if (static_cast<int>(vals.size()) != spec.m) throw ConfigError("--policy constant needs m components");
    return Policy::constant(Eigen::Map<VectorXd>(vals.data(), spec.m));
  }
  throw ConfigError("--policy: expected feedback, random or constant:u1,..; got '" + text + "'");
}

struct Probe {
  double t = 0.0;
  VectorXd x0;
  Json history;
};

std::vector<Probe> load_probes(const RunConfig& c, const ProblemSpec& spec) {
  std::vector<Probe> out;
  if (c.probes_path.empty()) {
    for (double t : {0.0, 0.25, 0.5, 0.75}) out.push_back({t * spec.T, spec.initial.y0, Json()});
    return out;
  }
  const Json j = load_json(c.probes_path);
  if (!j.is_array()) throw ConfigError("probes file must hold a JSON array");
  try {
    for (const auto& p : j) {
      Probe q;
      q.t = p.at("t").get<double>();
      q.x0 = json_vector(p.at("x0"), spec.n, "probe x0");
      q.history = p.contains("history") ? p.at("history") : Json();
      out.push_back(q);
    }
  } catch (const Json::exception& e) {
    throw ConfigError(std::string("probes: ") + e.what());
  }
  return out;
}

int cmd_check(const RunConfig& c, const ProblemSpec& spec, std::ostream& out) {
  HypothesisOptions ho;
  ho.seed = c.seed;
  const HypothesisReport r = check_hypotheses(spec, ho);
  Json j;
  j["meta"] = meta(c);
  j["spec"] = spec.name;
  j["report"] = hypotheses_json(r);
  write_json(fs::path(c.out_dir) / "check.json", j);
  out << "check " << spec.name << ": " << (r.all_hold() ? "all hypotheses hold" : "hypotheses violated")
      << ", controllable=" << (r.kalman.controllable ? "yes" : "no");
  if (r.kalman.r) out << ", r=" << *r.kalman.r;
  out << '\n';
  return (c.strict && !r.all_hold()) ? kExitHypothesis : kExitOk;
}

int cmd_solve(const RunConfig& c, const ProblemSpec& spec, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const SolveResult r = picard_solve(spec, c.grid);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  Json m = meta(c);
  m["spec"] = spec.name;
  write_field(r.field, (fs::path(c.out_dir) / "field").string(), m);
  Json j;
  j["meta"] = m;
  j["report"] = solve_report_json(r.report);
  j["field"] = field_header(r.field);
  write_json(fs::path(c.out_dir) / "solve.json", j);
  out << "solve " << spec.name << ": " << (r.report.converged ? "converged" : "not converged") << " in "
      << r.report.iterations << " iterations (eta " << r.report.eta << ", " << std::round(secs * 10) / 10
      << " s), v(0, x0) = " << fmt(evaluate_v(spec, r.field, 0.0, lift_initial(spec))) << '\n';
  return kExitOk;
}

int cmd_evaluate(const RunConfig& c, const ProblemSpec& spec, std::ostream& out) {
  const std::vector<Probe> probes = load_probes(c, spec);
  const ReducedValueField field = obtain_field(spec, c);
  Json rows = Json::array();
  std::vector<std::vector<double>> table;
  for (const Probe& p : probes) {
    ProblemSpec s = spec;
    s.initial.y0 = p.x0;
    if (!p.history.is_null()) s.initial.u0 = history_from_json(p.history, spec.m, spec.d);
    const AbstractState x = lift_initial(s);
    const VectorXd yr = reduced_coordinate(spec.T - p.t, x, spec.a0);
    const double v = evaluate_v(spec, field, p.t, x);
    const double v_exact = evaluate_v(spec, field, p.t, x, true);
    Json row;
    row["t"] = p.t;
    row["x0"] = to_json(p.x0);
    row["history"] = p.history;
    row["reduced"] = to_json(yr);
    row["v"] = v;
    row["v_exact_running"] = v_exact;
    std::vector<double> line{p.t};
    for (Eigen::Index i = 0; i < p.x0.size(); ++i) line.push_back(p.x0(i));
    line.push_back(v);
    line.push_back(v_exact);
    if (p.t < spec.T) {
      const VectorXd g = grad_B_v(spec, field, p.t, x);
      row["grad_B_v"] = to_json(g);
      for (Eigen::Index i = 0; i < g.size(); ++i) line.push_back(g(i));
    } else {
      row["grad_B_v"] = Json();
      for (int i = 0; i < spec.m; ++i) line.push_back(std::nan(""));
    }
    rows.push_back(row);
    table.push_back(line);
  }
  Json j;
  j["meta"] = meta(c);
  j["spec"] = spec.name;
  j["probes"] = rows;
  write_json(fs::path(c.out_dir) / "evaluate.json", j);
  if (c.format == "csv") {
    std::vector<std::string> header{"t"};
    for (const auto& s : names("x", spec.n)) header.push_back(s);
    header.push_back("v");
    header.push_back("v_exact_running");
    for (const auto& s : names("grad_B_v", spec.m)) header.push_back(s);
    write_csv(fs::path(c.out_dir) / "evaluate.csv", header, table);
  }
  out << "evaluate " << spec.name << ": " << probes.size() << " probes, v(" << probes.front().t
      << ") = " << fmt(rows.front()["v"].get<double>()) << '\n';
  return kExitOk;
}

int cmd_simulate(const RunConfig& c, const ProblemSpec& spec, std::ostream& out) {
  std::optional<ReducedValueField> field;
  if (c.policy == "feedback") field = obtain_field(spec, c);
  const Policy policy = parse_policy(c.policy, spec, field ? &*field : nullptr, c.seed);
  SimOptions o = sim_options(c);
  o.record_paths = std::min(c.record, c.paths);
  o.thin = c.thin;
  const TrajectoryBatch b = integrate(spec, policy, o);
  const Estimate J = estimate_cost(b);
  std::vector<std::string> header{"path", "t"};
  for (const auto& s : names("y", spec.n)) header.push_back(s);
  for (const auto& s : names("u", spec.m)) header.push_back(s);
  std::vector<std::vector<double>> table;
  for (std::size_t p = 0; p < b.paths.size(); ++p) {
    for (std::size_t i = 0; i < b.sample_times.size(); ++i) {
      std::vector<double> line{static_cast<double>(p), b.sample_times[i]};
      for (int a = 0; a < spec.n; ++a) line.push_back(b.paths[p](a, i));
      for (int a = 0; a < spec.m; ++a) line.push_back(b.controls[p](a, i));
      table.push_back(line);
    }
  }
  write_csv(fs::path(c.out_dir) / "trajectories.csv", header, table);
  Json j;
  j["meta"] = meta(c);
  j["spec"] = spec.name;
  j["policy"] = b.policy;
  j["dt"] = b.dt;
  j["dt_requested"] = b.dt_requested;
  j["steps"] = b.steps;
  j["n_paths"] = b.n_paths;
  j["seed"] = b.seed;
  j["feedback_cutoff"] = b.cutoff;
  j["J_mean"] = J.mean;
  j["J_se"] = J.se;
  j["running_mean"] = b.running.mean();
  j["control_mean"] = b.control.mean();
  j["terminal_mean"] = b.terminal.mean();
  j["projections"] = b.projections;
  j["recorded_paths"] = b.paths.size();
  j["notes"] = b.notes;
  write_json(fs::path(c.out_dir) / "simulate.json", j);
  out << "simulate " << spec.name << " [" << b.policy << "]: J = " << fmt(J.mean) << " +- " << fmt(J.se) << " over "
      << b.n_paths << " paths, dt " << b.dt << '\n';
  return kExitOk;
}

int cmd_verify(const RunConfig& c, const ProblemSpec& spec, std::ostream& out) {
  const ReducedValueField field = obtain_field(spec, c);
  const SimOptions o = sim_options(c);
  std::vector<Policy> policies{Policy::feedback(field),
                               Policy::constant(spec.U.project(VectorXd::Zero(spec.m))),
                               Policy::constant(spec.U.project(VectorXd::Constant(spec.m, 0.5))),
                               random_open_loop(spec.U, spec.T, c.seed)};
  Json ids = Json::array();
  bool identity_ok = true;
  double v = 0.0;
  for (const Policy& p : policies) {
    const IdentityResult r = fundamental_identity_residual(spec, field, p, o);
    v = r.v;
    const bool within = std::abs(r.residual.mean) <= 3.0 * r.residual.se;
    const bool above = r.gap.mean >= -3.0 * r.gap.se;
    identity_ok = identity_ok && within && above;
    Json row;
    row["policy"] = p.name;
    row["J"] = estimate_json(r.J);
    row["integral"] = estimate_json(r.integral);
    row["residual"] = estimate_json(r.residual);
    row["gap"] = estimate_json(r.gap);
    row["residual_within_3se"] = within;
    row["gap_above_minus_3se"] = above;
    if (p.kind == Policy::Kind::kFeedback) row["max_feedback_integrand"] = r.max_feedback_integrand;
    row["projections"] = r.projections;
    ids.push_back(row);
  }
  const Ranking rk = compare_policies(spec, field, constant_sweep(spec.U, 21), o);
  Json rows = Json::array();
  std::vector<std::vector<double>> table;
  for (std::size_t i = 0; i < rk.rows.size(); ++i) {
    const RankingRow& r = rk.rows[i];
    rows.push_back({{"rank", i + 1},
                    {"policy", r.name},
                    {"J", estimate_json(r.J)},
                    {"gap", estimate_json(r.gap)},
                    {"paired_diff", estimate_json(r.paired_diff)},
                    {"pooled_se", r.pooled_se}});
    table.push_back({static_cast<double>(i + 1), r.J.mean, r.J.se, r.gap.mean, r.paired_diff.mean,
                     r.paired_diff.se, r.pooled_se});
  }
  Json j;
  j["meta"] = meta(c);
  j["spec"] = spec.name;
  j["v"] = v;
  j["dt"] = rk.dt;
  j["n_paths"] = rk.n_paths;
  j["seed"] = c.seed;
  j["feedback_cutoff"] = 2.0 * rk.dt;
  j["identity"] = ids;
  j["ranking"] = {{"rows", rows},
                  {"common_random_numbers", rk.common_random_numbers},
                  {"feedback_rank", rk.feedback_rank},
                  {"feedback_dominates", rk.feedback_dominates},
                  {"feedback_consistent", rk.feedback_consistent}};
  j["passed"] = identity_ok && rk.feedback_dominates && rk.feedback_consistent;
  write_json(fs::path(c.out_dir) / "verify.json", j);
  if (c.format == "csv") {
    std::vector<std::string> header{"rank", "J_mean", "J_se", "gap", "paired_diff", "paired_se", "pooled_se"};
    write_csv(fs::path(c.out_dir) / "ranking.csv", header, table);
  }
  out << "verify " << spec.name << ": v = " << fmt(v) << ", identity " << (identity_ok ? "ok" : "FAILED")
      << ", feedback ranked " << rk.feedback_rank << " of " << rk.rows.size() << '\n';
  return kExitOk;
}

int cmd_sweep(const RunConfig& c, const ProblemSpec& spec, std::ostream& out) {
  QuadratureSpec q;
  q.order = 2;  // only the factorization is used
  std::vector<double> ts = rate_fit_times(), inv, ker;
  std::vector<std::vector<double>> table;
  Json rows = Json::array();
  bool kernel_ok = true;
  for (double t : ts) {
    const GaussKernel k = compute_Q0(t, spec, q);
    const double a = op_norm(k.pinv_sqrtQ0());
    double b = std::nan("");
    try {
      const MatrixXd D = etAB0(t, spec);
      require_in_range(k, D, "(e^{tA}B)_0");
      b = op_norm(k.pinv_sqrtQ0() * D);
    } catch (const SmoothingUnavailable&) {
      kernel_ok = false;
    }
    inv.push_back(a);
    ker.push_back(b);
    table.push_back({t, a, b});
    rows.push_back({{"t", t}, {"inv_sqrt_Q0", a}, {"kernel", std::isfinite(b) ? Json(b) : Json()}});
  }
  const KalmanReport kr = kalman(spec);
  Json j;
  j["meta"] = meta(c);
  j["spec"] = spec.name;
  j["r"] = kr.r ? Json(*kr.r) : Json();
  j["slope_inv_sqrt_Q0"] = loglog_slope(ts, inv);
  j["slope_kernel"] = kernel_ok ? Json(loglog_slope(ts, ker)) : Json();
  j["rows"] = rows;
  write_json(fs::path(c.out_dir) / "sweep.json", j);
  if (c.format == "csv") write_csv(fs::path(c.out_dir) / "sweep.csv", {"t", "inv_sqrt_Q0", "kernel"}, table);
  out << "sweep " << spec.name << ": slope " << fmt(j["slope_inv_sqrt_Q0"].get<double>());
  if (kernel_ok) out << ", kernel slope " << fmt(j["slope_kernel"].get<double>());
  out << '\n';
  return kExitOk;
}

}  // namespace

const char* to_string(Command c) {
  switch (c) {
    case Command::kCheck: return "check";
    case Command::kSolve: return "solve";
    case Command::kEvaluate: return "evaluate";
    case Command::kSimulate: return "simulate";
    case Command::kVerify: return "verify";
    case Command::kSweep: return "sweep";
  }
  return "?";
}

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig:
    case ErrorCode::kValidation:
      return kExitConfig;
    default:
      return kExitNumeric;
  }
}

void parse_grid(const std::string& text, GridConfig& grid) {
  for (const auto& [key, value] : key_values(text, "--grid")) {
    if (key == "nx") {
      grid.nodes = positive_int(value, "--grid nx");
      if (grid.nodes < 4) throw ConfigError("--grid nx: at least 4 nodes per axis");
    } else if (key == "steps") {
      grid.time_steps = positive_int(value, "--grid steps");
    } else if (key == "grading") {
      grid.time_grading = real(value, "--grid grading");
      if (grid.time_grading < 1.0) throw ConfigError("--grid grading must be >= 1");
    } else if (key == "bounds") {
      if (value == "auto") {
        grid.lo.reset();
        grid.hi.reset();
        continue;
      }
      const auto colon = value.find(':');
      if (colon == std::string::npos) throw ConfigError("--grid bounds: expected auto or lo:hi");
      const double lo = real(value.substr(0, colon), "--grid bounds"), hi = real(value.substr(colon + 1), "--grid bounds");
      if (!(lo < hi)) throw ConfigError("--grid bounds: lo must be below hi");
      // Same interval on every axis; the dimension is known once the spec is loaded.
      grid.lo = VectorXd::Constant(1, lo);
      grid.hi = VectorXd::Constant(1, hi);
    } else {
      throw ConfigError("--grid: unknown key '" + key + "'");
    }
  }
}

void parse_quad(const std::string& text, GridConfig& grid) {
  for (const auto& [key, value] : key_values(text, "--quad")) {
    if (key == "order") {
      grid.quad_order = positive_int(value, "--quad order");
    } else if (key == "theta") {
      grid.theta_order = positive_int(value, "--quad theta");
    } else {
      throw ConfigError("--quad: unknown key '" + key + "'");
    }
  }
}

RunConfig parse_args(int argc, const char* const* argv, std::string* help) {
  RunConfig c;
  std::string grid_text, quad_text;
  CLI::App app{"Partial-smoothing HJB solver and verifier for control problems with delay in the control",
               "delayctl"};
  app.require_subcommand(1);
  const char* about[] = {"standing hypotheses (Kalman rank, image condition, Hamiltonian)",
                         "solve the reduced HJB equation and export the field",
                         "v and grad^B v at probe states",
                         "simulate the delay SDE under a policy",
                         "fundamental identity and policy ranking by Monte Carlo",
                         "blow-up rates of the smoothing kernel"};
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < std::size(kCommands); ++i) {
    CLI::App* sub = app.add_subcommand(to_string(kCommands[i]), about[i]);
    sub->add_option("--spec", c.spec_path, "problem spec (JSON)")->required();
    sub->add_option("--out", c.out_dir, "output directory")->capture_default_str();
    sub->add_option("--dt", c.dt, "simulation step")->capture_default_str();
    sub->add_option("--paths", c.paths, "Monte Carlo paths")->capture_default_str();
    sub->add_option("--seed", c.seed, "random seed")->capture_default_str();
    sub->add_option("--grid", grid_text, "grid overrides, e.g. nx=41,steps=20,bounds=auto");
    sub->add_option("--quad", quad_text, "quadrature overrides, e.g. order=16,theta=20");
    sub->add_option("--format", c.format, "table format")->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    sub->add_option("--probes", c.probes_path, "probe states for evaluate (JSON)");
    sub->add_option("--field", c.field_path, "previously solved field instead of solving");
    sub->add_option("--policy", c.policy, "simulate: feedback | random | constant:u1,..")->capture_default_str();
    sub->add_option("--record", c.record, "simulate: trajectories written")->capture_default_str();
    sub->add_option("--thin", c.thin, "simulate: keep every thin-th step")->capture_default_str();
    sub->add_flag("--strict", c.strict, "check: exit 3 when a hypothesis fails");
    subs.push_back(sub);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    if (help) *help = app.help();
    return c;
  } catch (const CLI::CallForAllHelp&) {
    if (help) *help = app.help("", CLI::AppFormatMode::All);
    return c;
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (subs[i]->parsed()) c.command = kCommands[i];
  }
  if (!grid_text.empty()) parse_grid(grid_text, c.grid);
  if (!quad_text.empty()) parse_quad(quad_text, c.grid);
  if (!(c.dt > 0.0)) throw ConfigError("--dt must be positive");
  if (c.paths < 1) throw ConfigError("--paths must be positive");
  if (c.record < 0 || c.thin < 1) throw ConfigError("--record must be >= 0 and --thin >= 1");
  for (const std::string* p : {&c.spec_path, &c.probes_path}) {
    if (!p->empty() && !fs::exists(*p)) throw ConfigError("no such file '" + *p + "'");
  }
  return c;
}

Json config_json(const RunConfig& c) {
  Json j;
  j["command"] = to_string(c.command);
  j["spec"] = c.spec_path.empty() ? Json() : load_json(c.spec_path);
  j["grid"] = grid_json(c.grid);
  j["dt"] = c.dt;
  j["paths"] = c.paths;
  j["seed"] = c.seed;
  if (c.command == Command::kSimulate) j["policy"] = c.policy;
  if (!c.probes_path.empty()) j["probes"] = load_json(c.probes_path);
  if (!c.field_path.empty()) j["field"] = load_json(fs::path(c.field_path).replace_extension(".json").string())["meta"];
  return j;
}

int run(const RunConfig& config, std::ostream& out) {
  RunConfig c = config;
  ProblemSpec spec = load_spec(c.spec_path);
  if (c.grid.lo && c.grid.lo->size() != spec.n) {
    c.grid.lo = VectorXd::Constant(spec.n, (*c.grid.lo)(0));
    c.grid.hi = VectorXd::Constant(spec.n, (*c.grid.hi)(0));
  }
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + c.out_dir + "'");
  switch (c.command) {
    case Command::kCheck: return cmd_check(c, spec, out);
    case Command::kSolve: return cmd_solve(c, spec, out);
    case Command::kEvaluate: return cmd_evaluate(c, spec, out);
    case Command::kSimulate: return cmd_simulate(c, spec, out);
    case Command::kVerify: return cmd_verify(c, spec, out);
    case Command::kSweep: return cmd_sweep(c, spec, out);
  }
  return kExitConfig;
}

int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  auto diagnose = [&](const char* code, const std::string& module, const std::string& message, int status) {
    Json d;
    d["error"] = code;
    d["module"] = module;
    d["message"] = message;
    d["exit"] = status;
    err << d.dump() << '\n';
    return status;
  };
  try {
    std::string help;
    const RunConfig c = parse_args(argc, argv, &help);
    if (!help.empty()) {
      out << help;
      return kExitOk;
    }
    return run(c, out);
  } catch (const Error& e) {
    return diagnose(to_string(e.code()), e.module(), e.what(), exit_code(e.code()));
  } catch (const Json::exception& e) {
    return diagnose("config", "cli", e.what(), kExitConfig);
  } catch (const std::exception& e) {
    return diagnose("numeric", "cli", e.what(), kExitNumeric);
  }
}

}  // namespace delayctl
