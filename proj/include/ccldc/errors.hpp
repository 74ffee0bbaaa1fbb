#pragma once

#include <stdexcept>
#include <string>

namespace ccldc {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents do not line up for the requested operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A numeric hyperparameter is outside its valid range (e.g. temperature <= 0).
class ParameterError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an API precondition (non-scalar loss, label out of range, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// An object was used in the wrong lifecycle state (consumed graph, missing grads).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment, architecture or augmentation configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. Carries a human readable location in the message.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A metric is mathematically undefined for the supplied values.
class DomainError : public Error {
 public:
  using Error::Error;
};

}  // namespace ccldc
