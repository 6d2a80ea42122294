#pragma once

#include <stdexcept>
#include <string>

namespace fpfts {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

// Time grid sampled too coarsely for the packet's baseband content.
class AliasingError : public Error {
 public:
  AliasingError(const std::string& what, double required_rate_hz)
      : Error(what), required_rate_hz_(required_rate_hz) {}
  double required_rate_hz() const noexcept { return required_rate_hz_; }

 private:
  double required_rate_hz_;
};

class GridTooShort : public Error {
 public:
  using Error::Error;
};

class ModelOverflow : public Error {
 public:
  using Error::Error;
};

class FitFailure : public Error {
 public:
  FitFailure(const std::string& what, double residual_rms)
      : Error(what), residual_rms_(residual_rms) {}
  double residual_rms() const noexcept { return residual_rms_; }

 private:
  double residual_rms_;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class DegenerateInput : public Error {
 public:
  using Error::Error;
};

class OutOfSpan : public Error {
 public:
  using Error::Error;
};

class AmbiguityUnresolved : public Error {
 public:
  using Error::Error;
};

// Run configuration rejected; message starts with the offending field path.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& reason)
      : Error(field + ": " + reason), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace fpfts
