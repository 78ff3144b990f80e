// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <stdexcept>
#include <string>

namespace sleeptl {

/// Base class for every error raised by the library. Errors derived from
/// UserError describe bad inputs or configuration; anything else is an
/// internal failure.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UserError : public Error {
 public:
  using Error::Error;
};

/// Malformed input file. `field()` names the offending header field or token.
class ParseError : public UserError {
 public:
  ParseError(std::string field, const std::string& message);
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

class ConfigError : public UserError {
 public:
  using UserError::UserError;
};

/// Tensor or parameter shapes that do not line up.
class ShapeError : public UserError {
 public:
  using UserError::UserError;
};

/// Data that is well-formed but unusable for the requested operation
/// (too short, empty, overlapping splits, ...).
class DataError : public UserError {
 public:
  using UserError::UserError;
};

/// Non-finite value detected during a forward op or an optimizer step.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace sleeptl
