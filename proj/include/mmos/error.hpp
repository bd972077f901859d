#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mmos {

/// Base for every error the library raises. Each subclass maps to one CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Malformed on-disk data. Carries the byte offset at which decoding failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), detail_(what), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }
  /// The message without the offset suffix.
  const std::string& detail() const noexcept { return detail_; }

 private:
  std::string detail_;
  std::size_t offset_;
};

/// Two inputs that must agree do not (label count vs image count, checkpoint vs network).
class ConsistencyError : public Error {
 public:
  using Error::Error;
};

/// A one-shot class was found where only background classes may appear.
class LeakageError : public Error {
 public:
  using Error::Error;
};

/// Episode constraints cannot be satisfied by the dataset.
class SamplingError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace mmos
