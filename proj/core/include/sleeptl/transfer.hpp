// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sleeptl/checkpoint.hpp"
#include "sleeptl/inference.hpp"
#include "sleeptl/metrics.hpp"
#include "sleeptl/recording.hpp"
#include "sleeptl/training.hpp"

namespace sleeptl {

enum class FinetuneStrategy {
  All,
  EpbSoftmax,
  SpbSoftmax,
  SoftmaxOnly,
  /// Direct transfer: the pretrained model is used as is.
  None,
  /// Fresh parameters trained on the target only.
  Scratch,
};

/// "all", "epb+softmax", "spb+softmax", "softmax", "none", "scratch".
std::string to_string(FinetuneStrategy s);
FinetuneStrategy parse_finetune_strategy(const std::string& name);

/// Groups kept fixed during finetuning.
std::set<ParamGroup> frozen_groups(FinetuneStrategy s);

enum class TransferScenario { EegEogEmg, EegEog, Eeg, Eog, EegToEog };

/// "eeg-eog-emg", "eeg-eog", "eeg", "eog", "eeg-to-eog".
std::string to_string(TransferScenario s);
TransferScenario parse_transfer_scenario(const std::string& name);

struct ScenarioSpec {
  std::vector<std::string> source_channels;
  std::vector<std::string> target_channels;
};

ScenarioSpec scenario_spec(TransferScenario s);

/// Canonical target-domain recordings split by subject.
struct TransferData {
  std::vector<Recording> train;
  std::vector<Recording> validation;
  std::vector<Recording> test;
};

struct TransferOptions {
  /// Refit spectrogram normalization on the target training split instead of
  /// reusing the source statistics. Scratch models always refit.
  bool refit_normalization = false;
  /// Log test accuracy at every evaluation.
  bool monitor_test = false;
  PredictOptions predict;
};

struct TransferReport {
  TransferScenario scenario = TransferScenario::Eeg;
  FinetuneStrategy strategy = FinetuneStrategy::All;
  std::set<ParamGroup> frozen;
  EvalReport metrics_before;
  EvalReport metrics_after;
  std::size_t steps = 0;
  std::uint64_t seed = 0;
  std::string source_checkpoint;
  std::string output_checkpoint;
};

nlohmann::json to_json(const TransferReport& r);

struct TransferResult {
  Checkpoint checkpoint;
  TrainResult training;
  TransferReport report;
  std::vector<HypnogramPrediction> predictions;
};

/// Finetunes the parameter subset chosen by `strategy` on the target data and
/// reports test metrics before and after. Throws ShapeError when the
/// checkpoint cannot take the scenario's target channels.
TransferResult run_transfer(const Checkpoint& source, const TransferData& target,
                            TransferScenario scenario, FinetuneStrategy strategy,
                            const TrainConfig& config, const TransferOptions& options = {});

struct SweepCurve {
  std::size_t n_subjects = 0;
  std::vector<std::string> subjects;
  /// Test accuracy per evaluation, padded with its last value to the
  /// longest curve of the sweep.
  std::vector<CurvePoint> curve;
  /// Points recorded before padding.
  std::size_t recorded = 0;
  EvalReport final_metrics;
};

/// For each count, finetunes on a seeded random subset of that many subjects
/// drawn from `target.train`, with fixed validation and test splits.
std::vector<SweepCurve> subject_count_sweep(const Checkpoint& source, const TransferData& target,
                                            const std::vector<std::size_t>& counts,
                                            TransferScenario scenario, FinetuneStrategy strategy,
                                            const TrainConfig& config, std::uint64_t seed,
                                            const TransferOptions& options = {});

}  // namespace sleeptl
