// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace misfit {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments or inconsistent caller-supplied state.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Filesystem problems: missing paths, unreadable/unwritable files.
class IoError : public Error {
 public:
  using Error::Error;
};

// A file exists but its contents cannot be decoded.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Array/image dimensions do not line up.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf or other numeric breakdown.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad configuration values (schema violations, impossible sizes).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Checkpoint checksum/truncation failures.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// Checkpoint format version mismatch.
class VersionError : public Error {
 public:
  using Error::Error;
};

// Synthetic scene construction cannot satisfy the request.
class GenerationError : public Error {
 public:
  using Error::Error;
};

}  // namespace misfit
