#pragma once

#include <stdexcept>
#include <string>

namespace fdivmin {

// Caller broke a documented precondition (shape mismatch, bad key, ...).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& msg) : std::logic_error(msg) {}
};

// An input left the mathematical domain of an operation (log of <= 0, ...).
class DomainViolation : public std::runtime_error {
 public:
  explicit DomainViolation(const std::string& msg) : std::runtime_error(msg) {}
};

// A numeric procedure failed to meet its accuracy/stability contract.
class NumericFailure : public std::runtime_error {
 public:
  explicit NumericFailure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fdivmin
