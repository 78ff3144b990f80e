// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace sleeptl {

inline constexpr std::size_t kNumStages = 5;

/// AASM sleep stage. The numeric order is also the argmax tie-break order.
enum class StageLabel : unsigned char { W = 0, N1 = 1, N2 = 2, N3 = 3, REM = 4 };

inline constexpr std::size_t index_of(StageLabel s) {
  return static_cast<std::size_t>(s);
}

StageLabel stage_from_index(std::size_t index);

std::array<double, kNumStages> one_hot(StageLabel s);

std::string_view to_string(StageLabel s);

/// Parses the canonical names written by `to_string` ("W", "N1", ...).
std::optional<StageLabel> parse_stage_name(std::string_view name);

}  // namespace sleeptl
