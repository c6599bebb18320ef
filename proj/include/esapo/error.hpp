#pragma once

#include <stdexcept>
#include <string>

namespace esapo {

// Malformed input: bad file contents, violated record invariants, bad flags.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numeric failure at run time: non-finite loss, divergence, failed gradient check.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition of an operation.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace esapo
