#pragma once

#include <stdexcept>
#include <string>

namespace utd {

// Exception hierarchy. The CLI maps each kind onto a process exit code:
// InputError -> 1, ConfigError -> 2, InvariantError -> 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unreadable input data (files, records, degenerate geometry).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or parameter sets.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A library invariant was violated at run time.
class InvariantError : public Error {
 public:
  using Error::Error;
};

}  // namespace utd
