// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/hypnogram.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "sleeptl/edf.hpp"
#include "sleeptl/error.hpp"

namespace sleeptl {
namespace {

std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

bool is_excluded_token(std::string_view t) {
  return t == "MOVEMENT" || t == "UNKNOWN" || t == "M" || t == "MT" || t == "?" ||
         t == "Movement time" || t == "Sleep stage ?";
}

}  // namespace

std::string_view to_string(ScoringStandard s) {
  return s == ScoringStandard::Aasm ? "AASM" : "RK";
}

ScoringStandard parse_scoring_standard(std::string_view s) {
  if (s == "AASM") return ScoringStandard::Aasm;
  if (s == "RK" || s == "R&K") return ScoringStandard::Rk;
  throw ConfigError("unknown scoring standard '" + std::string(s) + "'");
}

std::vector<std::string> parse_hypnogram(std::string_view text) {
  std::vector<std::string> tokens;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = trim(text.substr(pos, nl - pos));
    if (!line.empty() && line.front() != '#') tokens.emplace_back(line);
    pos = nl + 1;
  }
  if (tokens.empty()) throw ParseError("hypnogram", "no scored epochs in input");
  return tokens;
}

std::vector<std::string> parse_hypnogram(const std::vector<EdfAnnotation>& annotations,
                                         double epoch_len_s) {
  if (epoch_len_s <= 0) throw ConfigError("epoch length must be positive");
  std::vector<std::string> tokens;
  for (const auto& a : annotations) {
    bool stage = a.text.rfind("Sleep stage", 0) == 0 || a.text == "Movement time";
    if (!stage) continue;
    auto first = static_cast<std::size_t>(std::llround(a.onset_s / epoch_len_s));
    auto count = static_cast<std::size_t>(std::llround(a.duration_s / epoch_len_s));
    if (tokens.size() < first + count) tokens.resize(first + count, "UNKNOWN");
    for (std::size_t i = 0; i < count; ++i) tokens[first + i] = a.text;
  }
  if (tokens.empty()) throw ParseError("annotations", "no sleep stage annotations found");
  return tokens;
}

std::optional<StageLabel> map_stage_token(std::string_view token, ScoringStandard standard,
                                          std::size_t index) {
  if (is_excluded_token(token)) return std::nullopt;
  // Shared spellings.
  if (token == "W" || token == "Sleep stage W") return StageLabel::W;
  if (token == "R" || token == "REM" || token == "Sleep stage R") return StageLabel::REM;
  if (standard == ScoringStandard::Aasm) {
    if (token == "N1" || token == "Sleep stage N1") return StageLabel::N1;
    if (token == "N2" || token == "Sleep stage N2") return StageLabel::N2;
    if (token == "N3" || token == "Sleep stage N3") return StageLabel::N3;
  } else {
    if (token == "1" || token == "Sleep stage 1") return StageLabel::N1;
    if (token == "2" || token == "Sleep stage 2") return StageLabel::N2;
    if (token == "3" || token == "Sleep stage 3") return StageLabel::N3;
    if (token == "4" || token == "Sleep stage 4") return StageLabel::N3;
  }
  throw ParseError("hypnogram[" + std::to_string(index) + "]",
                   "token '" + std::string(token) + "' is not defined under " +
                       std::string(to_string(standard)));
}

StageMapping map_stages(const std::vector<std::string>& tokens, ScoringStandard standard) {
  StageMapping out;
  out.labels.reserve(tokens.size());
  out.kept.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    auto label = map_stage_token(tokens[i], standard, i);
    if (label) {
      out.labels.push_back(*label);
      out.kept.push_back(i);
    } else {
      out.excluded.push_back(i);
    }
  }
  return out;
}

Hypnogram hypnogram_from_json(const nlohmann::json& doc) {
  Hypnogram h;
  if (!doc.is_object()) throw ParseError("sidecar", "expected a JSON object");
  if (!doc.contains("hypnogram") || !doc["hypnogram"].is_array()) {
    throw ParseError("hypnogram", "missing token array");
  }
  for (const auto& t : doc["hypnogram"]) {
    if (!t.is_string()) throw ParseError("hypnogram", "tokens must be strings");
    h.tokens.push_back(t.get<std::string>());
  }
  if (h.tokens.empty()) throw ParseError("hypnogram", "no scored epochs in input");
  try {
    h.standard = parse_scoring_standard(doc.value("standard", std::string("AASM")));
  } catch (const ConfigError& e) {
    throw ParseError("standard", e.what());
  }
  auto marker = [&](const char* key) -> std::optional<std::size_t> {
    if (!doc.contains(key) || doc[key].is_null()) return std::nullopt;
    if (!doc[key].is_number_integer() || doc[key].get<long long>() < 0) {
      throw ParseError(key, "must be a non-negative integer epoch index");
    }
    return doc[key].get<std::size_t>();
  };
  h.lights_off_epoch = marker("lights_off_epoch");
  h.lights_on_epoch = marker("lights_on_epoch");
  h.epoch_len_s = doc.value("epoch_len_s", 30.0);
  if (!(h.epoch_len_s > 0)) throw ParseError("epoch_len_s", "must be positive");
  if (doc.contains("subject") && doc["subject"].is_string()) {
    h.subject = doc["subject"].get<std::string>();
  }
  return h;
}

nlohmann::json hypnogram_to_json(const Hypnogram& h) {
  nlohmann::json doc;
  doc["hypnogram"] = h.tokens;
  doc["standard"] = std::string(to_string(h.standard));
  doc["lights_off_epoch"] =
      h.lights_off_epoch ? nlohmann::json(*h.lights_off_epoch) : nlohmann::json();
  doc["lights_on_epoch"] =
      h.lights_on_epoch ? nlohmann::json(*h.lights_on_epoch) : nlohmann::json();
  doc["epoch_len_s"] = h.epoch_len_s;
  if (h.subject) doc["subject"] = *h.subject;
  return doc;
}

}  // namespace sleeptl
