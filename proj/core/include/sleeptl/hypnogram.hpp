// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "sleeptl/stage.hpp"

namespace sleeptl {

struct EdfAnnotation;

enum class ScoringStandard { Aasm, Rk };

std::string_view to_string(ScoringStandard s);
ScoringStandard parse_scoring_standard(std::string_view s);

/// Raw per-epoch scoring plus the optional in-bed markers.
struct Hypnogram {
  std::vector<std::string> tokens;
  ScoringStandard standard = ScoringStandard::Aasm;
  std::optional<std::size_t> lights_off_epoch;
  std::optional<std::size_t> lights_on_epoch;
  double epoch_len_s = 30.0;
  std::optional<std::string> subject;
};

/// One token per non-empty line; lines starting with '#' are comments.
/// Unknown tokens are kept verbatim for `map_stages` to judge.
std::vector<std::string> parse_hypnogram(std::string_view text);

/// Expands EDF+ stage annotations ("Sleep stage 2", "Movement time", ...) into
/// one token per epoch. Epochs not covered by any stage annotation become
/// "UNKNOWN".
std::vector<std::string> parse_hypnogram(const std::vector<EdfAnnotation>& annotations,
                                         double epoch_len_s);

/// Sidecar metadata document:
/// {hypnogram: [tokens], standard: "AASM"|"RK", lights_off_epoch,
///  lights_on_epoch, epoch_len_s, subject?}
Hypnogram hypnogram_from_json(const nlohmann::json& doc);
nlohmann::json hypnogram_to_json(const Hypnogram& h);

struct StageMapping {
  std::vector<StageLabel> labels;
  /// Indices (into the input token list) of MOVEMENT/UNKNOWN epochs.
  std::vector<std::size_t> excluded;
  /// Input index of each entry of `labels`.
  std::vector<std::size_t> kept;
};

/// Converts raw tokens to the five AASM classes. R&K stage 4 merges into N3;
/// movement and unknown epochs are excluded. Throws ParseError naming the
/// token and its index for anything the declared standard does not define.
StageMapping map_stages(const std::vector<std::string>& tokens, ScoringStandard standard);

/// Single-token form of `map_stages`: nullopt means "excluded".
std::optional<StageLabel> map_stage_token(std::string_view token, ScoringStandard standard,
                                          std::size_t index);

}  // namespace sleeptl
