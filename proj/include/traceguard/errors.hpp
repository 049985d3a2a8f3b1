#pragma once

#include <stdexcept>
#include <string>

namespace traceguard {

// Malformed input: bad corpus lines, unknown labels, broken instance files.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A parameter set that falls outside the admissible perturbation set.
class ConstraintError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace traceguard
