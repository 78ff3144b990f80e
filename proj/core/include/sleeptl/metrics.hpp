// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <array>
#include <cstddef>
#include <span>

#include <nlohmann/json.hpp>

#include "sleeptl/stage.hpp"

namespace sleeptl {

/// counts[true][predicted]
using ConfusionMatrix = std::array<std::array<std::size_t, kNumStages>, kNumStages>;

struct EvalReport {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double kappa = 0.0;
  std::array<double, kNumStages> per_class_f1{};
  ConfusionMatrix confusion{};
  std::size_t n = 0;
};

ConfusionMatrix confusion_matrix(std::span<const StageLabel> truth,
                                 std::span<const StageLabel> predicted);

/// Metrics of a confusion matrix. A class with neither true nor predicted
/// instances scores F1 = 0. When both labelings use one single class, kappa
/// is 1.
EvalReport report_from_confusion(const ConfusionMatrix& cm);

/// Throws DataError on empty or mismatched inputs.
EvalReport compute_metrics(std::span<const StageLabel> truth, std::span<const StageLabel> predicted);

ConfusionMatrix& operator+=(ConfusionMatrix& a, const ConfusionMatrix& b);

nlohmann::json to_json(const EvalReport& r);

}  // namespace sleeptl
