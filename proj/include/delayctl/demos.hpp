#pragma once

#include <string>
#include <vector>

#include "delayctl/model.hpp"

namespace delayctl::demos {

// Desk-scale problems used by the tests, the acceptance binary and the
// data/specs JSON files (which mirror these definitions).

/// n = m = k = 1, a0 = 0, b0 = 1, sigma = 1, no delay term, U = [-1, 1],
/// l1 = u^2/2, bounded smooth well as terminal cost.
ProblemSpec scalar();

/// Scalar with a distributed delay: b1 density 1 on [-d, 0], d = 0.5,
/// nonzero control history.
ProblemSpec distributed_delay();

/// Scalar with a pointwise delay b1 = 0.5 delta_{-d}, d = 0.5.
ProblemSpec pointwise_delay();

/// n = 2, m = k = 1, a0 = [[0, 0], [1, 0]], sigma = b0 = e1. Kalman exponent 1.
ProblemSpec rank_one();

/// U = {0}, l1 = 0, l0 = 0, phi(y) = y^2 with a distributed delay and a
/// nontrivial history, so v(t, x) = ((e^{(T-t)A} x)_0)^2 + (T - t).
ProblemSpec closed_form();

/// distributed_delay() with a spatially varying running cost.
ProblemSpec running_cost();

/// Looks a demo up by name; throws ValidationError for unknown names.
ProblemSpec by_name(const std::string& name);
std::vector<std::string> names();

}  // namespace delayctl::demos
