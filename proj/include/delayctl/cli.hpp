#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "delayctl/errors.hpp"
#include "delayctl/hjb.hpp"
#include "delayctl/spec_io.hpp"

namespace delayctl {

enum class Command { kCheck, kSolve, kEvaluate, kSimulate, kVerify, kSweep };
const char* to_string(Command c);

struct RunConfig {
  Command command = Command::kCheck;
  std::string spec_path;
  std::string out_dir = ".";
  double dt = 1e-3;
  int paths = 1000;
  std::uint64_t seed = 0;
  GridConfig grid;
  std::string format = "json";  // csv | json
  std::string probes_path;      // evaluate
  std::string field_path;       // reuse a solved field instead of solving
  std::string policy = "feedback";  // simulate: feedback | random | constant:u1,..
  int record = 10;  // simulate: trajectories written
  int thin = 10;
  bool strict = false;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitHypothesis = 3;
inline constexpr int kExitNumeric = 4;

int exit_code(ErrorCode code);

/// Parses a --grid value such as "nx=41,steps=20,bounds=auto" or
/// "bounds=-3:3" into `grid`. Throws ConfigError.
void parse_grid(const std::string& text, GridConfig& grid);
/// Parses --quad "order=16,theta=20".
void parse_quad(const std::string& text, GridConfig& grid);

/// Throws ConfigError on bad arguments. `help` receives the usage text when
/// --help is given (and the returned config is then meaningless).
RunConfig parse_args(int argc, const char* const* argv, std::string* help = nullptr);

/// Runs one command; artifacts go to config.out_dir, a one-line summary to
/// `out`. Errors propagate as delayctl::Error.
int run(const RunConfig& config, std::ostream& out);

/// argv front door: never throws, prints a JSON diagnostic on failure.
int main_entry(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Hash input shared by every artifact of a run.
Json config_json(const RunConfig& config);

}  // namespace delayctl
