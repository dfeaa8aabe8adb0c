#pragma once

#include <stdexcept>
#include <string>

namespace ouf {

// Runtime numerical failure: indefinite covariance, singular system, divergent
// iteration.  Contract violations (bad dimensions, invalid arguments) use
// std::invalid_argument instead.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ouf
