#pragma once

#include <stdexcept>
#include <string>

namespace seqfuse {

// Violated precondition or malformed input. CLI maps this family to exit code 1.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Shape mismatch between two operands; the message names both shapes.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Raised when the single-pass inference path is requested for a fusion mode
// whose semantics it cannot reproduce.
class AmortizationUnsupported : public ContractError {
 public:
  using ContractError::ContractError;
};

inline std::string shape_str(long rows, long cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ContractError(msg);
}

inline void require_dims(bool cond, const std::string& msg) {
  if (!cond) throw DimensionError(msg);
}

}  // namespace seqfuse
