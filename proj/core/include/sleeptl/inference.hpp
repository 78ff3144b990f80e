// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sleeptl/dataset.hpp"
#include "sleeptl/metrics.hpp"
#include "sleeptl/models.hpp"

namespace sleeptl {

using Posterior = std::array<double, kNumStages>;

enum class FusionRule {
  /// Floored log-posteriors summed and divided by the ensemble size, then
  /// renormalized (a normalized geometric mean).
  Multiplicative,
  /// Mean of posteriors.
  Additive,
};

std::string to_string(FusionRule r);
FusionRule parse_fusion_rule(const std::string& name);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax_lowest(const Posterior& p);

struct Aggregate {
  Posterior posterior{};
  StageLabel label = StageLabel::W;
};

/// Fuses the decisions one epoch received. Throws DataError when empty.
Aggregate aggregate(std::span<const Posterior> decisions,
                    FusionRule rule = FusionRule::Multiplicative);

/// For every epoch of an n-epoch run, the (sequence start, index) pairs of
/// the hop-1 sequences of length L covering it. Throws DataError if n < L.
std::vector<std::vector<std::pair<std::size_t, std::size_t>>> sequence_routing(std::size_t n,
                                                                                std::size_t L);

struct EpochPrediction {
  std::vector<Posterior> contributions;
  Posterior posterior{};
  StageLabel label = StageLabel::W;
};

struct HypnogramPrediction {
  std::string recording_id;
  std::string subject;
  std::vector<std::size_t> epoch_index;
  std::vector<StageLabel> truth;
  std::vector<EpochPrediction> epochs;

  std::vector<StageLabel> labels() const;
};

struct PredictOptions {
  /// Sequences evaluated per forward pass.
  std::size_t batch_size = 32;
  FusionRule fusion = FusionRule::Multiplicative;
};

/// Evaluates the model on every hop-1 sequence inside each contiguous run
/// and fuses the up-to-L decisions of each epoch. Throws DataError when a run
/// is shorter than the model's sequence length.
HypnogramPrediction predict_recording(const SequenceModel& model, const PreparedRecording& rec,
                                      const PredictOptions& opts = {});

/// Pooled metrics over several predictions.
EvalReport evaluate_predictions(std::span<const HypnogramPrediction> preds);

/// Rows: epoch_index, true, predicted, one column per class posterior.
void write_predictions_csv(std::span<const HypnogramPrediction> preds,
                           const std::filesystem::path& path);

}  // namespace sleeptl
