#pragma once

#include <stdexcept>
#include <string>

namespace mvpure {

/// Raised when a numerical precondition or invariant is violated
/// (non-symmetric input, indefinite matrix, rank deficiency, ...).
class ContractError : public std::domain_error {
 public:
  explicit ContractError(const std::string& what) : std::domain_error(what) {}
};

/// Raised for malformed or inconsistent configuration and file input.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mvpure
