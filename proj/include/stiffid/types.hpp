#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace stiffid {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Exit codes used by the command-line runner; the exception hierarchy maps onto them.
enum class ExitCode : int {
  kSuccess = 0,
  kValidation = 1,
  kNumerical = 2,
  kIo = 3,
};

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what, ExitCode code)
      : std::runtime_error(what), code_(code) {}
  ExitCode code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// Bad configuration value or inconsistent dimensions.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what, ExitCode::kValidation) {}
};

/// Non-finite or otherwise unusable numeric input.
class InvalidInputError : public Error {
 public:
  explicit InvalidInputError(const std::string& what) : Error(what, ExitCode::kValidation) {}
};

/// Factorization failure, loss of definiteness, integration blow-up.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(what, ExitCode::kNumerical) {}
};

/// Degenerate posterior or particle weights. Carries the filter step when known.
class DegeneracyError : public NumericalError {
 public:
  explicit DegeneracyError(const std::string& what, std::int64_t step = -1)
      : NumericalError(what), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(what, ExitCode::kIo) {}
};

}  // namespace stiffid
