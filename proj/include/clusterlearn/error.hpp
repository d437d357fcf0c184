#pragma once

#include <stdexcept>
#include <string>

namespace clusterlearn {

/// Malformed or inconsistent input data (bad codes, missing values, label
/// domain violations, dimension mismatches between data and coefficients).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An exact solver was asked to enumerate beyond its configured limits.
class GuardExceeded : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A solver reached a state it cannot continue from (e.g. an external
/// backend produced no solution file).
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace clusterlearn
