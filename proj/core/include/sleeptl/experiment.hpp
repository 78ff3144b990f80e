// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "sleeptl/checkpoint.hpp"
#include "sleeptl/crossval.hpp"
#include "sleeptl/features.hpp"
#include "sleeptl/inference.hpp"
#include "sleeptl/models.hpp"
#include "sleeptl/synthdomain.hpp"
#include "sleeptl/training.hpp"
#include "sleeptl/transfer.hpp"

namespace sleeptl {

/// Recordings come either from a canonical dataset directory or from a
/// synthetic domain spec.
struct DataSource {
  std::optional<std::filesystem::path> dataset;
  std::optional<DomainSpec> synth;
};

nlohmann::json to_json(const DataSource& s);
DataSource data_source_from_json(const nlohmann::json& j, const std::string& where);

/// How subjects are split into folds.
struct FoldPlan {
  /// "loo", "kfold", "holdout" or "file".
  std::string kind = "holdout";
  std::size_t k = 0;
  std::size_t n_validation = 0;
  /// Holdout only: test subjects.
  std::size_t n_test = 1;
  std::optional<std::filesystem::path> file;
};

nlohmann::json to_json(const FoldPlan& p);
FoldPlan fold_plan_from_json(const nlohmann::json& j);
/// Folds over the given subjects.
std::vector<Fold> make_folds(const FoldPlan& plan, const std::vector<std::string>& subjects,
                             std::uint64_t seed);

struct ExperimentConfig {
  std::optional<DataSource> source;
  std::optional<DataSource> target;
  ModelConfig model;
  TrainConfig train;
  /// Finetuning settings; defaults to `train`.
  std::optional<TrainConfig> finetune;
  StftParams stft;
  TransferScenario scenario = TransferScenario::Eeg;
  FinetuneStrategy strategy = FinetuneStrategy::All;
  /// Source subjects held out for early stopping during pretraining.
  std::size_t pretrain_validation = 0;
  FoldPlan folds;
  std::vector<std::size_t> sweep_counts;
  std::optional<std::filesystem::path> checkpoint;
  std::filesystem::path output = "out";
  std::uint64_t seed = 0;
  bool refit_normalization = false;
  FusionRule fusion = FusionRule::Multiplicative;

  const TrainConfig& finetune_config() const { return finetune ? *finetune : train; }
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Strict: unknown keys are a ConfigError. Relative paths resolve against
/// `base_dir`.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j,
                                             const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

std::vector<Recording> load_source(const DataSource& s);

/// Prepares and, for spectrograms, normalizes recordings through a pipeline.
std::vector<PreparedRecording> apply_pipeline(const std::vector<Recording>& recs,
                                              const InputPipeline& pipeline,
                                              const std::optional<std::filesystem::path>& cache);

/// Feature cache directory from SLEEPTL_CACHE_DIR, if set.
std::optional<std::filesystem::path> cache_dir_from_env();

/// Build identification baked in at configure time.
std::string git_describe();

/// Everything needed to reproduce a command's outputs.
struct RunManifest {
  std::string command;
  nlohmann::json config;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // name, sha256
};

void write_run_manifest(const RunManifest& m, const std::filesystem::path& dir);

/// Digest of a dataset's recordings, in order.
std::string dataset_digest(const std::vector<Recording>& recs);

}  // namespace sleeptl
