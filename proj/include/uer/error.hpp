#pragma once

#include <stdexcept>
#include <string>

namespace uer {

// Base of every error the library raises. The CLI maps the subclasses onto
// process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor extents.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Caller violated an operation precondition (non-scalar loss, bad axis, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Every position of a loss was ignored. Targets turn this into a skip signal.
class EmptyLossError : public Error {
 public:
  using Error::Error;
};

// Invalid model spec, config file, or command line. Exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed corpus, dataset, vocabulary, or checkpoint. Exit code 3.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during training. Exit code 4.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace uer
