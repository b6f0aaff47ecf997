#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace volterra {

inline constexpr const char* kVersion = "0.1.0";

// Error taxonomy. Everything the library throws derives from Error so the
// CLI can map failure classes onto distinct exit codes.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Preconditions and API misuse: bad grid, malformed marks, basis too large.
class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& msg) : Error(msg) {}
};

// A structural contract broken at runtime, e.g. an integrand tagged
// predictable that correlates with its own cell's increment.
class ContractViolation : public Error {
 public:
  explicit ContractViolation(const std::string& msg) : Error(msg) {}
};

// Regression design matrix unusable even after ridge regularization.
class IllConditionedRegression : public Error {
 public:
  explicit IllConditionedRegression(const std::string& msg) : Error(msg) {}
};

// Non-finite state during a solve; carries the first offending cell.
class NumericalBlowup : public Error {
 public:
  NumericalBlowup(const std::string& msg, std::size_t cell)
      : Error(msg + " (cell " + std::to_string(cell) + ")"), cell(cell) {}
  std::size_t cell;
};

// Iterative scheme exhausted its budget or diverged; keeps the defect trace.
class NoConvergence : public Error {
 public:
  NoConvergence(const std::string& msg, std::vector<double> defects)
      : Error(msg), defects(std::move(defects)) {}
  std::vector<double> defects;
};

// Scenario-specific feasibility failure (e.g. state must stay positive
// because the driver takes its logarithm).
class ScenarioInfeasible : public Error {
 public:
  explicit ScenarioInfeasible(const std::string& msg) : Error(msg) {}
};

}  // namespace volterra
