#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace pullsync {

/// Raised when a caller violates an operation's precondition (mismatched
/// widths, BIT sampling on a protocol that does not declare bitwise
/// independence, an empty population, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised by configuration validation. Carries every violated constraint, not
/// just the first one.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> diagnostics);

  const std::vector<std::string>& diagnostics() const noexcept { return diagnostics_; }

 private:
  std::vector<std::string> diagnostics_;
};

}  // namespace pullsync
