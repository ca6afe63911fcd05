#pragma once

#include <stdexcept>
#include <string>

namespace teleguard {

// Bad input: malformed config, dimension mismatch, unknown key. CLI exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A file that fails structural checks (truncated, bad checksum, bad version).
class CorruptFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced NaN/Inf or otherwise diverged. CLI exit code 2.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace teleguard
