#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flowservo {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Argument outside the operation's domain (bad pixel, size mismatch, empty input).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Depth at or below the minimum usable depth.
class DegenerateDepthError : public Error {
 public:
  using Error::Error;
};

/// Depth cannot be recovered from flow because the twist has no translation.
class UnobservableDepthError : public Error {
 public:
  using Error::Error;
};

/// Too few valid flow samples.
class CoverageError : public Error {
 public:
  CoverageError(const std::string& what, std::size_t valid, std::size_t required)
      : Error(what), valid_(valid), required_(required) {}
  std::size_t valid() const { return valid_; }
  std::size_t required() const { return required_; }

 private:
  std::size_t valid_;
  std::size_t required_;
};

/// Damped normal matrix is singular or numerically close to it.
class ConditioningError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during online training.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated `.flo` file.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

/// Bad configuration key or value. `key()` names the offending entry.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& key, const std::string& what)
      : Error(key.empty() ? what : key + ": " + what), key_(key), detail_(what) {}
  const std::string& key() const { return key_; }
  /// The message without the key prefix.
  const std::string& detail() const { return detail_; }

 private:
  std::string key_;
  std::string detail_;
};

}  // namespace flowservo
