#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace noc {

// Shapes of two operands do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A rollout produced a non-finite state.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t step, const std::string& what)
      : std::runtime_error(what), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// A training phase hit a non-finite loss or a diverging rollout.
class PhaseError : public std::runtime_error {
 public:
  PhaseError(std::size_t alternation, std::string phase, const std::string& what)
      : std::runtime_error(what), alternation_(alternation), phase_(std::move(phase)) {}
  std::size_t alternation() const noexcept { return alternation_; }
  const std::string& phase() const noexcept { return phase_; }

 private:
  std::size_t alternation_;
  std::string phase_;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnsupportedTaskError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace noc
