#include "delayctl/hypotheses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "delayctl/errors.hpp"

namespace delayctl {

bool HypothesisReport::all_hold() const {
  if (image.condition == ImageCondition::kFails) return false;
  if (hamiltonian_method.empty() || !lipschitz_selection) return false;
  return std::all_of(costs.begin(), costs.end(), [](const CostSample& c) { return c.ok; });
}

HypothesisReport check_hypotheses(const ProblemSpec& spec, const HypothesisOptions& opts) {
  spec.validate();
  HypothesisReport rep;
  rep.seed = opts.seed;
  rep.kalman = kalman(spec);
  if (!rep.kalman.controllable) rep.warnings.push_back("(a0, sigma) is not controllable; Q_t^0 is singular");
  rep.image = check_image_conditions(spec);
  if (rep.image.condition == ImageCondition::kFails) {
    rep.warnings.push_back("neither image condition holds: " + rep.image.detail);
  }

  try {
    const Hamiltonian h(spec.U, spec.cost.control);
    rep.hamiltonian_method = to_string(h.method());
    rep.lipschitz = lipschitz_audit(h, opts.lipschitz_samples, opts.lipschitz_radius, opts.seed);
    rep.lipschitz_selection = h.lipschitz_selection();
    if (!rep.lipschitz_selection) {
      rep.warnings.push_back("no Lipschitz selection of the argmin is declared; feedback synthesis is refused");
    }
  } catch (const UnboundedHamiltonian& e) {
    rep.warnings.push_back(e.what());
  }

  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> unif(-opts.cost_radius, opts.cost_radius);
  std::uniform_real_distribution<double> unif_t(0.0, spec.T);
  auto random_y = [&] {
    VectorXd y(spec.n);
    for (int i = 0; i < spec.n; ++i) y(i) = unif(rng);
    return y;
  };
  const double inf = std::numeric_limits<double>::infinity();

  {
    CostSample c{"control", inf, -inf, spec.cost.control.lower_bound, true};
    for (const VectorXd& u : spec.U.sample(spec.m == 1 ? 201 : 21, opts.cost_radius)) {
      const double v = spec.cost.control.value(u);
      c.sampled_min = std::min(c.sampled_min, v);
      c.sampled_max = std::max(c.sampled_max, v);
    }
    c.ok = c.sampled_min >= spec.cost.control.lower_bound - 1e-12;
    if (!c.ok) rep.warnings.push_back("control cost falls below its declared lower bound");
    rep.costs.push_back(c);
  }
  // Bounded costs are checked against the declared bound. For unbounded ones
  // the constant C in |f(y)| <= C (1 + |y|^N) is estimated and must be finite.
  auto audit = [&](const std::string& name, auto&& f, std::optional<double> bound, int degree) {
    CostSample c{name, inf, -inf, bound, true};
    double growth = 0.0;
    for (int i = 0; i < opts.cost_samples; ++i) {
      const VectorXd y = random_y();
      const double v = f(y);
      if (!std::isfinite(v)) c.ok = false;
      c.sampled_min = std::min(c.sampled_min, v);
      c.sampled_max = std::max(c.sampled_max, v);
      growth = std::max(growth, std::abs(v) / (1.0 + std::pow(y.norm(), degree)));
    }
    if (bound) {
      c.ok = c.ok && std::max(std::abs(c.sampled_min), std::abs(c.sampled_max)) <= *bound + 1e-12;
      if (!c.ok) rep.warnings.push_back(name + " cost exceeds its declared bound");
    } else {
      c.ok = c.ok && std::isfinite(growth);
      rep.warnings.push_back(name + " cost is unbounded (growth degree " + std::to_string(degree) +
                             "); the sup-norm estimates do not apply");
    }
    rep.costs.push_back(c);
  };
  if (spec.cost.running.value) {
    audit("running", [&](const VectorXd& y) { return spec.cost.running.value(unif_t(rng), y); },
          spec.cost.running.bound, spec.cost.running.growth_degree);
  }
  if (spec.cost.terminal.value) {
    audit("terminal", [&](const VectorXd& y) { return spec.cost.terminal.value(y); }, spec.cost.terminal.bound,
          spec.cost.terminal.growth_degree);
  } else {
    rep.warnings.push_back("terminal cost missing");
  }
  return rep;
}

}  // namespace delayctl
