#pragma once

#include <stdexcept>
#include <string>

namespace spanrl {

// Bad input data: malformed files, out-of-range spans, schema violations.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller-supplied parameter is outside its documented domain.
class ParameterError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

// Simulator state became non-finite.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace spanrl
