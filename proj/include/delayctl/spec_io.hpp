#pragma once

#include <string>

#include <json.hpp>

#include "delayctl/model.hpp"

namespace delayctl {

using Json = nlohmann::ordered_json;

/// Builds a ProblemSpec from the JSON layout documented in README.md.
/// Throws ConfigError for missing or mistyped keys and ValidationError when
/// the assembled spec is inconsistent.
ProblemSpec spec_from_json(const Json& j);
ProblemSpec load_spec(const std::string& path);
Json load_json(const std::string& path);
/// Control history in the layout of "initial.u0" (null means zero).
ControlHistory history_from_json(const Json& j, int m, double d);

/// Matrix from a nested array of rows, a flat row-major array or a scalar.
MatrixXd json_matrix(const Json& j, int rows, int cols, const std::string& what);
VectorXd json_vector(const Json& j, int size, const std::string& what);
Json to_json(const MatrixXd& a);
Json to_json(const VectorXd& v);

inline constexpr const char* kVersion = "0.1.0";

/// {"delayctl": version, "<module>": version, ...}, embedded in every artifact.
Json version_tags();

/// 64-bit FNV-1a of the compact dump, printed as 16 hex digits.
std::string config_hash(const Json& j);

}  // namespace delayctl
