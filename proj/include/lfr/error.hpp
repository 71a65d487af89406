#pragma once

#include <stdexcept>
#include <string>

namespace lfr {

// Domain failure: bad data, violated precondition, numerical divergence.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad invocation or configuration; the CLI maps this to exit code 2.
class UsageError : public Error {
 public:
  using Error::Error;
};

}  // namespace lfr
