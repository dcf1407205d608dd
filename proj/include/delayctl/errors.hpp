#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace delayctl {

/// Error categories. Each maps onto a CLI exit code (see cli.hpp).
enum class ErrorCode {
  kValidation,            // malformed or dimensionally inconsistent input
  kDomain,                // argument outside the operation's domain
  kNumeric,               // overflow, non-finite results, failed factorization
  kSmoothingUnavailable,  // image condition fails, B-gradient kernel undefined
  kUnboundedHamiltonian,  // H_min = -inf for some p
  kNonContraction,        // Picard ratios did not drop below one
  kSingularity,           // quantity requested at a singular point (e.g. gradient at t = T)
  kConfig,                // CLI / config file problems
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string module, const std::string& message)
      : std::runtime_error(message), code_(code), module_(std::move(module)) {}

  ErrorCode code() const { return code_; }
  const std::string& module() const { return module_; }

 private:
  ErrorCode code_;
  std::string module_;
};

class ValidationError : public Error {
 public:
  ValidationError(std::string module, const std::string& message)
      : Error(ErrorCode::kValidation, std::move(module), message) {}
};

class DomainError : public Error {
 public:
  DomainError(std::string module, const std::string& message)
      : Error(ErrorCode::kDomain, std::move(module), message) {}
};

class NumericError : public Error {
 public:
  NumericError(std::string module, const std::string& message)
      : Error(ErrorCode::kNumeric, std::move(module), message) {}
};

class SmoothingUnavailable : public Error {
 public:
  SmoothingUnavailable(std::string module, const std::string& message)
      : Error(ErrorCode::kSmoothingUnavailable, std::move(module), message) {}
};

class UnboundedHamiltonian : public Error {
 public:
  explicit UnboundedHamiltonian(const std::string& message)
      : Error(ErrorCode::kUnboundedHamiltonian, "hamiltonian", message) {}
};

class NonContraction : public Error {
 public:
  explicit NonContraction(const std::string& message)
      : Error(ErrorCode::kNonContraction, "hjb", message) {}
};

class SingularityError : public Error {
 public:
  SingularityError(std::string module, const std::string& message)
      : Error(ErrorCode::kSingularity, std::move(module), message) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& message)
      : Error(ErrorCode::kConfig, "cli", message) {}
};

}  // namespace delayctl
