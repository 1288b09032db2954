#pragma once

#include <stdexcept>
#include <string>

namespace saldrn {

/// Base of every error the toolkit raises. `user_error()` separates bad
/// input/configuration (CLI exit 1) from runtime failures (CLI exit 2).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual bool user_error() const { return false; }
};

class ConfigError : public Error {
 public:
  using Error::Error;
  bool user_error() const override { return true; }
};

class InvalidScale : public Error {
 public:
  using Error::Error;
  bool user_error() const override { return true; }
};

class EmptyDataset : public Error {
 public:
  using Error::Error;
  bool user_error() const override { return true; }
};

class InputTooSmall : public Error {
 public:
  using Error::Error;
  bool user_error() const override { return true; }
};

class ContractViolation : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class NonFiniteLoss : public Error {
 public:
  using Error::Error;
};

}  // namespace saldrn
