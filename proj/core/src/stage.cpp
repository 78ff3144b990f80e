// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/stage.hpp"

#include "sleeptl/error.hpp"

namespace sleeptl {

StageLabel stage_from_index(std::size_t index) {
  if (index >= kNumStages) {
    throw DataError("stage index out of range: " + std::to_string(index));
  }
  return static_cast<StageLabel>(index);
}

std::array<double, kNumStages> one_hot(StageLabel s) {
  std::array<double, kNumStages> v{};
  v[index_of(s)] = 1.0;
  return v;
}

std::string_view to_string(StageLabel s) {
  switch (s) {
    case StageLabel::W: return "W";
    case StageLabel::N1: return "N1";
    case StageLabel::N2: return "N2";
    case StageLabel::N3: return "N3";
    case StageLabel::REM: return "REM";
  }
  return "?";
}

std::optional<StageLabel> parse_stage_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumStages; ++i) {
    auto s = static_cast<StageLabel>(i);
    if (name == to_string(s)) return s;
  }
  return std::nullopt;
}

}  // namespace sleeptl
