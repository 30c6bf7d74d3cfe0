#pragma once

#include <stdexcept>
#include <string>

namespace hmdtrack {

// Precondition or validation failure inside the library. The CLI maps this to
// exit status 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File could not be opened, read or written. CLI exit status 2.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace hmdtrack
