#include "delayctl/demos.hpp"

#include <cmath>

#include "delayctl/errors.hpp"

namespace delayctl::demos {

namespace {

MatrixXd mat(double v) { return MatrixXd::Constant(1, 1, v); }
VectorXd vec(double v) { return VectorXd::Constant(1, v); }

ProblemSpec scalar_base(const std::string& name) {
  ProblemSpec s;
  s.name = name;
  s.n = s.m = s.k = 1;
  s.a0 = mat(0.0);
  s.b0 = mat(1.0);
  s.sigma = mat(1.0);
  s.d = 0.5;
  s.T = 1.0;
  s.b1 = DelayMeasure::zero(1, 1, s.d);
  s.U = ControlSet::box(vec(-1.0), vec(1.0));
  s.cost.control = quadratic_control_cost(mat(1.0), vec(0.0), 0.0);
  s.cost.running = zero_running_cost();
  s.cost.terminal = well_terminal_cost(vec(1.0), 1.0, 2.0);
  s.initial.y0 = vec(0.0);
  s.initial.u0 = constant_history(vec(0.0));
  return s;
}

}  // namespace

ProblemSpec scalar() { return scalar_base("scalar"); }

ProblemSpec distributed_delay() {
  ProblemSpec s = scalar_base("distributed_delay");
  s.b1 = DelayMeasure::constant_density(mat(1.0), s.d);
  s.initial.u0 = constant_history(vec(0.25));
  return s;
}

ProblemSpec pointwise_delay() {
  ProblemSpec s = scalar_base("pointwise_delay");
  s.b1 = DelayMeasure::point(mat(0.5), -s.d, s.d);
  s.initial.u0 = constant_history(vec(0.25));
  return s;
}

ProblemSpec rank_one() {
  ProblemSpec s;
  s.name = "rank_one";
  s.n = 2;
  s.m = s.k = 1;
  s.a0 = MatrixXd::Zero(2, 2);
  s.a0(1, 0) = 1.0;
  s.b0 = MatrixXd::Zero(2, 1);
  s.b0(0, 0) = 1.0;
  s.sigma = s.b0;
  s.d = 0.5;
  s.T = 1.0;
  s.b1 = DelayMeasure::constant_density(s.b0, s.d);
  s.U = ControlSet::box(vec(-1.0), vec(1.0));
  s.cost.control = quadratic_control_cost(mat(1.0), vec(0.0), 0.0);
  s.cost.running = zero_running_cost();
  VectorXd c(2);
  c << 0.5, 0.5;
  s.cost.terminal = well_terminal_cost(c, 1.0, 2.0);
  s.initial.y0 = VectorXd::Zero(2);
  s.initial.u0 = constant_history(vec(0.0));
  return s;
}

ProblemSpec closed_form() {
  ProblemSpec s = scalar_base("closed_form");
  s.b1 = DelayMeasure::constant_density(mat(1.0), s.d);
  s.U = ControlSet::finite({vec(0.0)});
  s.cost.control = zero_control_cost(1);
  s.cost.terminal = quadratic_terminal_cost(mat(1.0), vec(0.0));
  s.initial.y0 = vec(0.3);
  ControlHistory h;
  h.value = [](double xi) { return vec(std::sin(4.0 * xi)); };
  h.description = "sin(4 s)";
  s.initial.u0 = h;
  return s;
}

ProblemSpec running_cost() {
  ProblemSpec s = distributed_delay();
  s.name = "running_cost";
  s.cost.running = well_running_cost(vec(0.5), 0.75, 1.0);
  return s;
}

ProblemSpec by_name(const std::string& name) {
  if (name == "scalar") return scalar();
  if (name == "distributed_delay") return distributed_delay();
  if (name == "pointwise_delay") return pointwise_delay();
  if (name == "rank_one") return rank_one();
  if (name == "closed_form") return closed_form();
  if (name == "running_cost") return running_cost();
  throw ValidationError("demos", "unknown demo '" + name + "'");
}

std::vector<std::string> names() {
  return {"scalar", "distributed_delay", "pointwise_delay", "rank_one", "closed_form", "running_cost"};
}

}  // namespace delayctl::demos
