#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace gma3d {

// Dimension disagreement between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Out-of-range scalar argument (k too large, m > N, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Operation-specific precondition not met (e.g. normalization over < 2 rows).
class PreconditionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Misuse of the API, such as differentiating a value not on the tape.
class UsageError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// A NaN or infinity was produced or supplied.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::size_t index)
      : std::runtime_error(what), index_(index) {}
  explicit NumericalError(const std::string& what)
      : std::runtime_error(what), index_(static_cast<std::size_t>(-1)) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// A metric was requested over an empty point selection.
class NoPointsError : public std::runtime_error {
 public:
  NoPointsError() : std::runtime_error("no points selected by mask") {}
};

// Scene generation could not satisfy the requested occlusion constraints.
class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or unknown configuration.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(std::size_t step)
      : std::runtime_error("training diverged at step " + std::to_string(step)),
        step_(step) {}

  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

// File could not be read or written, or its contents are malformed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gma3d
