#pragma once

#include <stdexcept>
#include <string>

namespace hmws {

// Base of all library errors. CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Raised when a Tape is backpropagated after the ParamStore it read from was
// mutated.
class StaleTapeError : public Error {
 public:
  using Error::Error;
};

}  // namespace hmws
