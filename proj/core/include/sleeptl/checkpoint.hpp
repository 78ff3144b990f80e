// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sleeptl/features.hpp"
#include "sleeptl/models.hpp"
#include "sleeptl/parameter_store.hpp"

namespace sleeptl {

/// How recordings are turned into model inputs for a trained model.
struct InputPipeline {
  InputKind kind = InputKind::Spectrogram;
  std::vector<std::string> channels;
  StftParams stft;
  /// Spectrogram statistics fitted on the training split.
  std::optional<NormalizationStats> normalization;
};

nlohmann::json to_json(const InputPipeline& p);
InputPipeline input_pipeline_from_json(const nlohmann::json& j);

struct Provenance {
  std::string source_domain;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  std::string note;
};

struct CheckpointTensor {
  std::string name;
  ParamGroup group = ParamGroup::EPB;
  ParamKind kind = ParamKind::Param;
  ad::Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  ModelConfig config;
  InputPipeline pipeline;
  Provenance provenance;
  std::vector<CheckpointTensor> tensors;
};

Checkpoint capture_checkpoint(const SequenceModel& model, InputPipeline pipeline,
                              Provenance provenance);

/// Writes `<dir>/manifest.json` and `<dir>/params.bin` (float64, little endian).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// SHA-256 over the manifest and blob.
std::string checkpoint_hash(const std::filesystem::path& dir);
/// SHA-256 over the config hash, parameter names and values of an in-memory
/// checkpoint.
std::string checkpoint_digest(const Checkpoint& ckpt);

/// Copies checkpoint values into a model of compatible shape. Throws
/// ShapeError listing every missing, extra or differently shaped parameter.
void restore_into(SequenceModel& model, const Checkpoint& ckpt);

/// Builds the checkpoint's model and loads its values.
std::unique_ptr<SequenceModel> instantiate(const Checkpoint& ckpt);

}  // namespace sleeptl
