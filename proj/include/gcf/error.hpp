#pragma once

#include <stdexcept>
#include <string>

namespace gcf {

// Malformed or inconsistent input data (CLI exit code 3).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Solver breakdown, singular systems, broken numerical invariants (exit code 4).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller violated an argument precondition (exit code 2 when surfaced by the CLI).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace gcf
