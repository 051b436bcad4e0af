#pragma once

#include <stdexcept>
#include <string>

namespace battn {

// Bad inputs: malformed files, out-of-range parameters, violated preconditions.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Numeric trouble: infeasible bounds, non-finite intermediates.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace battn
