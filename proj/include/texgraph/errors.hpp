#pragma once

#include <stdexcept>
#include <string>

namespace texgraph {

/// Malformed input files, unresolved identifiers, schema conflicts.
/// The CLI maps this to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Singular systems, non-finite factors, eigensolver breakdown.
/// The CLI maps this to exit code 1.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated a shape or range precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace detail
}  // namespace texgraph
