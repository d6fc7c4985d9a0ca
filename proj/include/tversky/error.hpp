#pragma once

#include <stdexcept>
#include <string>

namespace tversky {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration or mismatched shapes. Maps to CLI exit code 1.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failure (open, read, write). Maps to CLI exit code 2.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed TVOL1 / TVNET1 file. Maps to CLI exit code 2.
class FormatError : public Error {
 public:
  enum class Kind { bad_magic, truncated, bad_header, shape_mismatch, dtype_mismatch };

  FormatError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace tversky
