// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sleeptl/metrics.hpp"
#include "sleeptl/stage.hpp"

namespace sleeptl {

/// Subject ids of one cross-validation fold.
struct Fold {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

/// One fold per subject. `n_validation` subjects are drawn at random from the
/// remaining ones, seeded per fold.
std::vector<Fold> leave_one_out(const std::vector<std::string>& subjects,
                                std::size_t n_validation, std::uint64_t seed);

/// `k` folds whose test sets partition the (seeded) shuffled subjects into
/// groups whose sizes differ by at most one.
std::vector<Fold> k_fold(const std::vector<std::string>& subjects, std::size_t k,
                         std::size_t n_validation, std::uint64_t seed);

/// Throws DataError when test sets overlap across folds or a fold's train,
/// validation and test sets intersect.
void check_folds(const std::vector<Fold>& folds);

nlohmann::json folds_to_json(const std::vector<Fold>& folds);
std::vector<Fold> folds_from_json(const nlohmann::json& j);

/// True and predicted labels of one fold's test epochs.
struct FoldOutcome {
  std::vector<StageLabel> truth;
  std::vector<StageLabel> predicted;
};

struct CrossValidationResult {
  std::vector<EvalReport> folds;
  /// Metrics of all folds' test epochs pooled together.
  EvalReport pooled;
};

using FoldPipeline = std::function<FoldOutcome(const Fold& fold, std::size_t index)>;

CrossValidationResult cross_validate(const std::vector<Fold>& folds, const FoldPipeline& pipeline);

}  // namespace sleeptl
