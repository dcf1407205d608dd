#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "delayctl/gaussian.hpp"
#include "delayctl/hamiltonian.hpp"
#include "delayctl/model.hpp"

namespace delayctl {

/// Sampled evidence for one declared cost property.
struct CostSample {
  std::string name;
  double sampled_min = 0.0;
  double sampled_max = 0.0;
  std::optional<double> declared_bound;  // sup-norm bound or lower bound, depending on the cost
  bool ok = true;
};

struct HypothesisReport {
  KalmanReport kalman;
  ImageReport image;
  std::string hamiltonian_method;
  LipschitzAudit lipschitz;
  bool lipschitz_selection = false;
  std::vector<CostSample> costs;
  std::vector<std::string> warnings;
  std::uint64_t seed = 0;

  /// Image condition holds, H_min is finite, costs match their declarations
  /// and a Lipschitz selection is available.
  bool all_hold() const;
};

struct HypothesisOptions {
  int lipschitz_samples = 1000;
  double lipschitz_radius = 10.0;
  int cost_samples = 512;
  double cost_radius = 10.0;
  std::uint64_t seed = 0;
};

/// Checks the standing hypotheses. Violations are reported, not thrown;
/// only dimension errors throw (ValidationError).
HypothesisReport check_hypotheses(const ProblemSpec& spec, const HypothesisOptions& opts = {});

}  // namespace delayctl
