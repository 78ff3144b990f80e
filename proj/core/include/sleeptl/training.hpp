// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sleeptl/dataset.hpp"
#include "sleeptl/inference.hpp"
#include "sleeptl/models.hpp"

namespace sleeptl {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 32;
  /// Full passes over the training sequences.
  std::size_t max_passes = 10;
  /// Evaluations without validation improvement before stopping.
  std::size_t early_stop_patience = 50;
  /// Optimizer steps between evaluations.
  std::size_t eval_every = 100;
  /// Overrides the model's L2 weight when set.
  std::optional<double> l2;
  std::uint64_t seed = 0;
  /// Hard cap on optimizer steps.
  std::optional<std::size_t> max_steps;
  bool mean_over_batch = true;
  double clip_norm = 0.0;
  /// Epoch shift between consecutive training sequences.
  std::size_t hop = 1;
  /// Sequences per forward pass during evaluation.
  std::size_t eval_batch_size = 64;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are a ParseError.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct CurvePoint {
  std::size_t step = 0;
  /// Mean minibatch loss since the previous point; absent at step 0.
  std::optional<double> train_loss;
  std::optional<double> val_accuracy;
  std::optional<double> monitor_accuracy;
};

struct TrainHooks {
  /// Groups left untouched: no gradient, no update, no running statistics.
  std::set<ParamGroup> frozen;
  /// Recordings whose accuracy is logged at every evaluation without
  /// influencing training.
  const std::vector<PreparedRecording>* monitor = nullptr;
  /// Called after every evaluation; returning false stops training.
  std::function<bool(const CurvePoint&, const SequenceModel&)> on_eval;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  std::size_t steps = 0;
  /// Step whose parameters the model holds on return.
  std::size_t best_step = 0;
  std::optional<double> best_val_accuracy;
  bool early_stopped = false;
  /// Subjects of every sequence that entered a training batch.
  std::set<std::string> trained_subjects;
};

/// Tracks the best metric seen and how many evaluations passed without
/// improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience);
  /// Returns true when `metric` strictly improves on the best so far.
  bool update(double metric, std::size_t step);
  bool should_stop() const { return patience_ > 0 && stale_ >= patience_; }
  std::optional<double> best() const { return best_; }
  std::size_t best_step() const { return best_step_; }

 private:
  std::size_t patience_;
  std::size_t stale_ = 0;
  std::optional<double> best_;
  std::size_t best_step_ = 0;
};

/// Ensemble accuracy over recordings, pooled across epochs.
double ensemble_accuracy(const SequenceModel& model, const std::vector<PreparedRecording>& recs,
                         std::size_t batch_size = 64);

/// Minibatch Adam training. With a validation set the model is evaluated
/// every `eval_every` steps (and before the first step), training stops after
/// `early_stop_patience` evaluations without improvement, and the best
/// parameters are restored on return. The optimizer starts from a fresh state.
TrainResult train(SequenceModel& model, const std::vector<PreparedRecording>& train_set,
                  const std::vector<PreparedRecording>& val_set, const TrainConfig& config,
                  const TrainHooks& hooks = {});

/// Rows `step,split,metric,value`.
void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path);

}  // namespace sleeptl
