#pragma once

#include <stdexcept>
#include <string>

namespace bllab {

/// Bad input: violated precondition, malformed file, unknown option.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// A numerical procedure failed (no convergence, singular system).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace bllab
