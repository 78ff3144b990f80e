// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/error.hpp"

#include <utility>

namespace sleeptl {

ParseError::ParseError(std::string field, const std::string& message)
    : UserError(field.empty() ? message : field + ": " + message),
      field_(std::move(field)) {}

}  // namespace sleeptl
