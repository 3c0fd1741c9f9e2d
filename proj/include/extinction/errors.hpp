#pragma once

#include <stdexcept>
#include <string>

namespace extinction {

/// Invalid or inconsistent input parameters (nonpositive lengths, aliasing grids, size mismatch).
class ParameterError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of a formula (t <= 0, theta outside (0,1], beta out of range).
class DomainError : public std::domain_error {
public:
  using std::domain_error::domain_error;
};

/// A bound was requested for a case whose preconditions do not hold.
class CaseError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Operation not defined for this variant (e.g. strong monotonicity of a multivalued graph).
class UnsupportedError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// Divergence questions that cannot be decided from the given data.
class UndecidableError : public std::logic_error {
public:
  using std::logic_error::logic_error;
};

/// The implicit drift solve did not reach its tolerance.
class SolverError : public std::runtime_error {
public:
  SolverError(const std::string& what, double residual)
      : std::runtime_error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

private:
  double residual_;
};

/// Too many trajectories of an ensemble failed.
class EnsembleError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Configuration file problems; the message carries the offending key path.
class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace extinction
