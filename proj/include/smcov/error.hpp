#pragma once

#include <stdexcept>
#include <string>

namespace smcov {

// Process exit codes used by the CLI.
enum class ExitCode : int { ok = 0, usage = 1, data = 2, internal = 3 };

// Bad or inconsistent input data: malformed files, invariant violations,
// dimension mismatches.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller misuse: invalid parameters or unknown options.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A broken internal invariant (a bug, not bad input).
class InternalError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace smcov
