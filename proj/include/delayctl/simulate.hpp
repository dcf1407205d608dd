#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "delayctl/hjb.hpp"
#include "delayctl/model.hpp"

namespace delayctl {

/// A control law for the delay SDE. Emitted controls are projected onto U.
struct Policy {
  enum class Kind { kFeedback, kConstant, kOpenLoop };
  Kind kind = Kind::kConstant;
  std::string name;
  VectorXd u;                                // constant
  std::function<VectorXd(double)> schedule;  // open loop, t -> u
  const ReducedValueField* field = nullptr;  // feedback
  /// Feedback is frozen on [T - cutoff, T]; default 2 dt.
  std::optional<double> cutoff;

  static Policy feedback(const ReducedValueField& field, std::optional<double> cutoff = {});
  static Policy constant(const VectorXd& u, std::string name = "");
  static Policy open_loop(std::function<VectorXd(double)> schedule, std::string name);
};

/// Piecewise constant on `pieces` equal intervals of [0, T], values drawn
/// uniformly from U (unbounded box axes clipped to [-1, 1]).
Policy random_open_loop(const ControlSet& U, double T, std::uint64_t seed, int pieces = 10);

struct SimOptions {
  double dt = 1e-3;
  int n_paths = 1000;
  std::uint64_t seed = 0;
  int record_paths = 0;  // full trajectories kept for the first paths
  int thin = 1;          // of those, every thin-th step
  std::vector<double> snapshots;  // times at which the state of every path is kept
  /// When set, accumulate int [H_min(grad^B v) - H_CV(grad^B v; u)] ds per path.
  const ReducedValueField* identity_field = nullptr;
};

struct TrajectoryBatch {
  std::string policy;
  double dt = 0.0;
  double dt_requested = 0.0;
  int steps = 0;
  int lag = 0;  // history buffer length, ceil(d / dt) steps
  int n_paths = 0;
  std::uint64_t seed = 0;
  double cutoff = 0.0;

  std::vector<double> sample_times;
  std::vector<MatrixXd> paths;     // recorded paths, n x samples
  std::vector<MatrixXd> controls;  // m x samples
  std::vector<double> snapshot_times;
  std::vector<MatrixXd> snapshots;  // n x n_paths

  VectorXd running, control, terminal;  // per path
  VectorXd identity;                    // per path, empty unless requested
  double max_feedback_integrand = 0.0;  // |H_min - H_CV| at feedback decision points
  long projections = 0;
  std::vector<std::string> notes;

  VectorXd cost() const { return running + control + terminal; }
};

/// Euler-Maruyama for dy = [a0 y + b0 u + int b1(dxi) u(t + xi)] dt + sigma dW
/// from t = 0 with history u0. Controls are piecewise constant on the step
/// grid and the density part of the delay integral is integrated exactly
/// against them; atoms are looked up pointwise. Path p draws its noise from
/// its own stream seeded by (seed, p), so policies share random numbers.
TrajectoryBatch integrate(const ProblemSpec& spec, const Policy& policy, const SimOptions& opts = {});

struct Estimate {
  double mean = 0.0;
  double se = 0.0;
};
Estimate mean_se(const VectorXd& samples);

Estimate estimate_cost(const TrajectoryBatch& batch);

struct IdentityResult {
  Estimate J;
  Estimate integral;  // E int [H_min - H_CV]
  Estimate residual;  // J + integral - v
  Estimate gap;       // J - v
  double v = 0.0;
  double max_feedback_integrand = 0.0;
  long projections = 0;
  double dt = 0.0;
};

/// v(0, x0) against J(u) + E int [H_min - H_CV] for the policy, path by path.
IdentityResult fundamental_identity_residual(const ProblemSpec& spec, const ReducedValueField& field,
                                             const Policy& policy, const SimOptions& opts = {});

struct RankingRow {
  std::string name;
  Estimate J;
  Estimate gap;          // J - v
  Estimate paired_diff;  // J(feedback) - J(this), same paths
  double pooled_se = 0.0;
};

struct Ranking {
  std::vector<RankingRow> rows;  // sorted by mean cost
  double v = 0.0;
  double dt = 0.0;
  int n_paths = 0;
  bool common_random_numbers = true;
  /// J(feedback) <= J(c) + 3 pooled SE for every candidate c.
  bool feedback_dominates = false;
  /// |J(feedback) - v| <= 3 SE + 5 dt.
  bool feedback_consistent = false;
  int feedback_rank = 0;
};

/// Feedback from `field` against the candidates, all on the same noise.
Ranking compare_policies(const ProblemSpec& spec, const ReducedValueField& field,
                         const std::vector<Policy>& candidates, const SimOptions& opts = {});

/// `count` evenly spaced constant controls across U (unbounded axes: [-1, 1]).
std::vector<Policy> constant_sweep(const ControlSet& U, int count = 21);

}  // namespace delayctl
