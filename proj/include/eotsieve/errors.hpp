#pragma once

#include <stdexcept>
#include <string>

namespace eotsieve {

// Process exit codes used by the CLI. Library errors map onto these so the
// harness can translate any exception into a stable exit status.
enum class ExitCode : int {
  ok = 0,
  invalid_config = 2,
  numerical_failure = 3,
  budget_exceeded = 4,
};

class Error : public std::runtime_error {
 public:
  Error(std::string type, const std::string& msg, ExitCode code)
      : std::runtime_error(msg), type_(std::move(type)), code_(code) {}

  const std::string& type() const { return type_; }
  ExitCode exit_code() const { return code_; }

 private:
  std::string type_;
  ExitCode code_;
};

struct InvalidArgument : Error {
  explicit InvalidArgument(const std::string& msg)
      : Error("invalid-argument", msg, ExitCode::invalid_config) {}
};

struct NumericalError : Error {
  NumericalError(std::string type, const std::string& msg)
      : Error(std::move(type), msg, ExitCode::numerical_failure) {}
};

struct NumericalUnderflow : NumericalError {
  explicit NumericalUnderflow(const std::string& msg)
      : NumericalError("numerical-underflow", msg) {}
};

struct DegenerateMarginal : NumericalError {
  explicit DegenerateMarginal(const std::string& msg)
      : NumericalError("degenerate-marginal", msg) {}
};

struct UnconvergedSolution : NumericalError {
  explicit UnconvergedSolution(const std::string& msg)
      : NumericalError("unconverged-solution", msg) {}
};

struct AcceptanceBudgetExceeded : Error {
  AcceptanceBudgetExceeded(const std::string& msg, double observed_rate)
      : Error("acceptance-budget-exceeded", msg, ExitCode::budget_exceeded),
        observed_acceptance_rate(observed_rate) {}
  double observed_acceptance_rate;
};

struct PartitionBudgetExceeded : Error {
  explicit PartitionBudgetExceeded(const std::string& msg)
      : Error("partition-budget", msg, ExitCode::budget_exceeded) {}
};

}  // namespace eotsieve
