#include "delayctl/spec_io.hpp"

#include <cstdio>
#include <fstream>
#include <limits>

#include "delayctl/errors.hpp"
#include "delayctl/expression.hpp"

namespace delayctl {

namespace {

const Json& need(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
  return j.at(key);
}

double num(const Json& j, const std::string& what) {
  if (!j.is_number()) throw ConfigError(what + ": expected a number");
  return j.get<double>();
}

int integer(const Json& j, const std::string& what) {
  if (!j.is_number_integer()) throw ConfigError(what + ": expected an integer");
  return j.get<int>();
}

double num_or(const Json& j, const char* key, double fallback, const std::string& where) {
  return j.contains(key) ? num(j.at(key), where + "." + key) : fallback;
}

DelayMeasure parse_delay(const Json& j, int n, int m, double d) {
  DelayMeasure b1 = DelayMeasure::zero(n, m, d);
  if (j.is_null()) return b1;
  if (j.contains("density") && !j.at("density").is_null()) {
    const Json& dj = j.at("density");
    const std::string kind = dj.value("kind", "piecewise_constant");
    if (kind == "constant") {
      b1 = DelayMeasure::constant_density(json_matrix(need(dj, "value", "delay.density"), n, m, "delay.density.value"), d);
    } else {
      const Json& bp = need(dj, "breakpoints", "delay.density");
      const Json& vals = need(dj, "values", "delay.density");
      if (!bp.is_array() || !vals.is_array()) throw ConfigError("delay.density: breakpoints and values must be arrays");
      std::vector<double> knots;
      for (const auto& x : bp) knots.push_back(num(x, "delay.density.breakpoints"));
      std::vector<MatrixXd> values;
      for (const auto& v : vals) values.push_back(json_matrix(v, n, m, "delay.density.values"));
      if (kind == "piecewise_constant") b1 = DelayMeasure::piecewise_constant(knots, values);
      else if (kind == "sampled") b1 = DelayMeasure::sampled(knots, values);
      else throw ConfigError("delay.density.kind must be constant, piecewise_constant or sampled");
    }
  }
  if (j.contains("atoms")) {
    for (const auto& a : j.at("atoms")) {
      b1.add_atom(num(need(a, "location", "delay.atoms"), "delay.atoms.location"),
                  json_matrix(need(a, "weight", "delay.atoms"), n, m, "delay.atoms.weight"));
    }
  }
  return b1;
}

ControlSet parse_control(const Json& j, int m) {
  if (j.contains("box")) {
    const Json& b = j.at("box");
    auto bound = [&](const char* key, double fallback) {
      if (!b.contains(key)) return VectorXd::Constant(m, fallback).eval();
      const Json& v = b.at(key);
      VectorXd out(m);
      if (v.is_number() || v.is_null()) {
        out.setConstant(v.is_null() ? fallback : v.get<double>());
        return out;
      }
      if (!v.is_array() || static_cast<int>(v.size()) != m) throw ConfigError(std::string("control.box.") + key + ": expected m entries");
      // null entries mean an unbounded axis
      for (int i = 0; i < m; ++i) out(i) = v[i].is_null() ? fallback : num(v[i], "control.box");
      return out;
    };
    const double inf = std::numeric_limits<double>::infinity();
    return ControlSet::box(bound("lo", -inf), bound("hi", inf));
  }
  if (j.contains("points")) {
    std::vector<VectorXd> pts;
    for (const auto& p : j.at("points")) pts.push_back(json_vector(p, m, "control.points"));
    return ControlSet::finite(pts);
  }
  throw ConfigError("control: expected 'box' or 'points'");
}

ControlCost parse_control_cost(const Json& j, int m) {
  if (j.contains("expression")) {
    const Expression e(j.at("expression").get<std::string>(), indexed_names("u", m));
    ControlCost c;
    c.value = [e](const VectorXd& u) { return e(u); };
    c.gradient = [e](const VectorXd& u) {
      VectorXd g;
      e.eval_grad(u, g);
      return g;
    };
    c.lower_bound = num_or(j, "lower_bound", -std::numeric_limits<double>::infinity(), "cost.control");
    c.coercive = j.value("coercive", false);
    c.lipschitz_selection_certified = j.value("lipschitz_selection", false);
    c.description = e.source();
    return c;
  }
  const std::string kind = need(j, "kind", "cost.control").get<std::string>();
  if (kind == "quadratic") {
    const MatrixXd q = json_matrix(need(j, "q", "cost.control"), m, m, "cost.control.q");
    const VectorXd c = j.contains("c") ? json_vector(j.at("c"), m, "cost.control.c") : VectorXd::Zero(m);
    return quadratic_control_cost(q, c, num_or(j, "c0", 0.0, "cost.control"));
  }
  if (kind == "linear") return linear_control_cost(json_vector(need(j, "c", "cost.control"), m, "cost.control.c"));
  if (kind == "zero") return zero_control_cost(m);
  throw ConfigError("cost.control.kind must be quadratic, linear or zero");
}

RunningCost parse_running_cost(const Json& j, int n) {
  if (j.is_null()) return zero_running_cost();
  if (j.contains("expression")) {
    std::vector<std::string> vars = indexed_names("y", n);
    vars.push_back("t");
    const Expression e(j.at("expression").get<std::string>(), vars);
    RunningCost c;
    c.value = [e, n](double t, const VectorXd& y) {
      VectorXd v(n + 1);
      v << y, t;
      return e(v);
    };
    c.gradient = [e, n](double t, const VectorXd& y) {
      VectorXd v(n + 1), g;
      v << y, t;
      e.eval_grad(v, g);
      return g.head(n).eval();
    };
    if (j.contains("bound")) c.bound = num(j.at("bound"), "cost.running.bound");
    c.growth_degree = j.contains("growth") ? integer(j.at("growth"), "cost.running.growth") : 0;
    c.spatially_constant = true;
    for (int i = 0; i < n; ++i) c.spatially_constant = c.spatially_constant && !e.depends_on(i);
    c.description = e.source();
    return c;
  }
  const std::string kind = need(j, "kind", "cost.running").get<std::string>();
  if (kind == "zero") return zero_running_cost();
  if (kind == "constant") return constant_running_cost(num(need(j, "value", "cost.running"), "cost.running.value"));
  if (kind == "quadratic") {
    return quadratic_running_cost(json_matrix(need(j, "weight", "cost.running"), n, n, "cost.running.weight"),
                                  j.contains("center") ? json_vector(j.at("center"), n, "cost.running.center")
                                                       : VectorXd::Zero(n));
  }
  if (kind == "well") {
    return well_running_cost(json_vector(need(j, "center", "cost.running"), n, "cost.running.center"),
                             num_or(j, "width", 1.0, "cost.running"), num_or(j, "depth", 1.0, "cost.running"));
  }
  throw ConfigError("cost.running.kind must be zero, constant, quadratic or well");
}

TerminalCost parse_terminal_cost(const Json& j, int n) {
  if (j.contains("expression")) {
    const Expression e(j.at("expression").get<std::string>(), indexed_names("y", n));
    TerminalCost c;
    c.value = [e](const VectorXd& y) { return e(y); };
    if (j.value("differentiable", true)) {
      c.gradient = [e](const VectorXd& y) {
        VectorXd g;
        e.eval_grad(y, g);
        return g;
      };
    }
    if (j.contains("bound")) c.bound = num(j.at("bound"), "cost.terminal.bound");
    c.growth_degree = j.contains("growth") ? integer(j.at("growth"), "cost.terminal.growth") : 0;
    c.description = e.source();
    return c;
  }
  const std::string kind = need(j, "kind", "cost.terminal").get<std::string>();
  if (kind == "zero") return zero_terminal_cost();
  if (kind == "quadratic") {
    return quadratic_terminal_cost(json_matrix(need(j, "weight", "cost.terminal"), n, n, "cost.terminal.weight"),
                                   j.contains("center") ? json_vector(j.at("center"), n, "cost.terminal.center")
                                                        : VectorXd::Zero(n));
  }
  if (kind == "well") {
    return well_terminal_cost(json_vector(need(j, "center", "cost.terminal"), n, "cost.terminal.center"),
                              num_or(j, "width", 1.0, "cost.terminal"), num_or(j, "depth", 1.0, "cost.terminal"));
  }
  throw ConfigError("cost.terminal.kind must be zero, quadratic or well");
}

ControlHistory parse_history(const Json& j, int m, double d) {
  if (j.is_null()) return constant_history(VectorXd::Zero(m));
  if (j.contains("constant")) return constant_history(json_vector(j.at("constant"), m, "initial.u0.constant"));
  if (j.contains("samples")) {
    const Json& s = j.at("samples");
    if (!s.is_array() || s.empty()) throw ConfigError("initial.u0.samples must be a nonempty array");
    // One row per control component, or a flat list when m = 1.
    const int cols = s[0].is_array() ? static_cast<int>(s[0].size()) : static_cast<int>(s.size());
    return sampled_history(d, json_matrix(s, m, cols, "initial.u0.samples"));
  }
  if (j.contains("expression")) {
    const Json& ex = j.at("expression");
    std::vector<Expression> comps;
    if (ex.is_string()) comps.emplace_back(ex.get<std::string>(), std::vector<std::string>{"s"});
    else for (const auto& e : ex) comps.emplace_back(e.get<std::string>(), std::vector<std::string>{"s"});
    if (static_cast<int>(comps.size()) != m) throw ConfigError("initial.u0.expression needs m components");
    ControlHistory h;
    h.value = [comps](double s) {
      VectorXd out(comps.size());
      const VectorXd arg = VectorXd::Constant(1, s);
      for (std::size_t i = 0; i < comps.size(); ++i) out(static_cast<Eigen::Index>(i)) = comps[i](arg);
      return out;
    };
    h.description = ex.dump();
    return h;
  }
  throw ConfigError("initial.u0: expected constant, samples or expression");
}

}  // namespace

MatrixXd json_matrix(const Json& j, int rows, int cols, const std::string& what) {
  MatrixXd a(rows, cols);
  if (j.is_number()) {
    if (rows != 1 || cols != 1) throw ConfigError(what + ": scalar given for a " + std::to_string(rows) + "x" + std::to_string(cols) + " matrix");
    a(0, 0) = j.get<double>();
    return a;
  }
  if (!j.is_array()) throw ConfigError(what + ": expected an array");
  if (!j.empty() && j[0].is_array()) {
    if (static_cast<int>(j.size()) != rows) throw ConfigError(what + ": expected " + std::to_string(rows) + " rows");
    for (int r = 0; r < rows; ++r) {
      if (!j[r].is_array() || static_cast<int>(j[r].size()) != cols) {
        throw ConfigError(what + ": expected " + std::to_string(cols) + " columns");
      }
      for (int c = 0; c < cols; ++c) a(r, c) = num(j[r][c], what);
    }
    return a;
  }
  if (static_cast<int>(j.size()) != rows * cols) {
    throw ConfigError(what + ": expected " + std::to_string(rows * cols) + " entries (row-major)");
  }
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) a(r, c) = num(j[r * cols + c], what);
  return a;
}

VectorXd json_vector(const Json& j, int size, const std::string& what) {
  return json_matrix(j, size, 1, what).col(0);
}

Json to_json(const MatrixXd& a) {
  Json out = Json::array();
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < a.cols(); ++c) row.push_back(a(r, c));
    out.push_back(row);
  }
  return out;
}

Json to_json(const VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

ProblemSpec spec_from_json(const Json& j) {
  if (!j.is_object()) throw ConfigError("spec: expected a JSON object");
  ProblemSpec s;
  s.name = j.value("name", "unnamed");
  s.n = integer(need(j, "n", "spec"), "n");
  s.m = integer(need(j, "m", "spec"), "m");
  s.k = integer(need(j, "k", "spec"), "k");
  if (s.n < 1 || s.m < 1 || s.k < 1) throw ConfigError("n, m, k must be positive");
  s.a0 = json_matrix(need(j, "a0", "spec"), s.n, s.n, "a0");
  s.b0 = json_matrix(need(j, "b0", "spec"), s.n, s.m, "b0");
  s.sigma = json_matrix(need(j, "sigma", "spec"), s.n, s.k, "sigma");
  s.d = num(need(j, "d", "spec"), "d");
  s.T = num(need(j, "T", "spec"), "T");
  s.b1 = parse_delay(j.contains("delay") ? j.at("delay") : Json(), s.n, s.m, s.d);
  s.U = parse_control(need(j, "control", "spec"), s.m);
  const Json& cost = need(j, "cost", "spec");
  s.cost.control = parse_control_cost(need(cost, "control", "cost"), s.m);
  s.cost.running = parse_running_cost(cost.contains("running") ? cost.at("running") : Json(), s.n);
  s.cost.terminal = parse_terminal_cost(need(cost, "terminal", "cost"), s.n);
  const Json init = j.contains("initial") ? j.at("initial") : Json::object();
  s.initial.y0 = init.contains("y0") ? json_vector(init.at("y0"), s.n, "initial.y0") : VectorXd::Zero(s.n);
  s.initial.u0 = parse_history(init.contains("u0") ? init.at("u0") : Json(), s.m, s.d);
  s.validate();
  return s;
}

Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ConfigError("'" + path + "' is not valid JSON: " + e.what());
  }
}

ControlHistory history_from_json(const Json& j, int m, double d) { return parse_history(j, m, d); }

ProblemSpec load_spec(const std::string& path) {
  try {
    return spec_from_json(load_json(path));
  } catch (const Json::exception& e) {
    throw ConfigError("'" + path + "': " + e.what());
  }
}

Json version_tags() {
  Json v;
  v["delayctl"] = kVersion;
  for (const char* m : {"model", "operator_core", "gaussian", "hamiltonian", "hjb", "simulate", "cli"}) v[m] = kVersion;
  return v;
}

std::string config_hash(const Json& j) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace delayctl
