#pragma once

#include <stdexcept>
#include <string>

namespace wicl {

// Base for every failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad or inconsistent user configuration (files, arguments, invariants of
// user-supplied values). The CLI maps this to exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace wicl
