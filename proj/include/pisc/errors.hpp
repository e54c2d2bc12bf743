#pragma once

#include <stdexcept>

namespace pisc {

/// Malformed input data or inconsistent role assignments.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Order or rank condition failure: the parameters are not point identified
/// by the supplied moment conditions.
class IdentificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Overflow, non-finite evaluations, or a failed line search.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace pisc
