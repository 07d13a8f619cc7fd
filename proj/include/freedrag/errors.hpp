#pragma once

#include <stdexcept>
#include <string>

namespace freedrag {

/// Precondition or shape check failed at an API boundary.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Operation exists on the interface but not for this backend.
class UnsupportedOperation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

namespace detail {
inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractViolation(what);
}
}  // namespace detail

}  // namespace freedrag
