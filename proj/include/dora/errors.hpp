#pragma once

#include <stdexcept>
#include <string>

namespace dora {

/// Raised when a caller violates an operation's precondition.
struct ContractViolation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Transport-level failure of a policy backend after retries were exhausted.
struct BackendError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A scripted mock ran out of replies. Deliberately not a BackendError so
/// that test scripts which are too short fail loudly instead of being
/// absorbed as invalid steps.
struct ScriptExhausted : std::logic_error {
  using std::logic_error::logic_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SchemaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& what) {
  if (!condition) throw ContractViolation(what);
}

}  // namespace dora
