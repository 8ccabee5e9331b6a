#pragma once

#include <stdexcept>
#include <string>

namespace selftune {

/// Base of every error thrown by the library. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

/// Mask generation could not satisfy the requested coverage bounds.
class GenerationError : public Error {
 public:
  using Error::Error;
};

class PlacementError : public Error {
 public:
  using Error::Error;
};

/// Invalid ModelSpec / FreeformSpec / config values.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Parameters or inputs do not satisfy a model contract (fingerprint, shapes).
class ContractError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Too few samples / patches for a well-defined statistic.
class DegenerateError : public Error {
 public:
  using Error::Error;
};

}  // namespace selftune
