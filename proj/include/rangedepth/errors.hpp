#pragma once

#include <stdexcept>
#include <string>

namespace rangedepth {

/// Malformed or out-of-contract input (bad files, invalid parameters).
/// The CLI maps this to exit code 1.
class InputError : public std::runtime_error {
 public:
  explicit InputError(const std::string& what) : std::runtime_error(what) {}
};

/// Linear-algebra failure, e.g. a Gram matrix that stays indefinite after
/// jitter escalation. The CLI maps this to exit code 2.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rangedepth
