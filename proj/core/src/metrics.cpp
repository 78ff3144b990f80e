// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/metrics.hpp"

#include <string>

#include "sleeptl/error.hpp"

namespace sleeptl {

ConfusionMatrix confusion_matrix(std::span<const StageLabel> truth,
                                 std::span<const StageLabel> predicted) {
  if (truth.size() != predicted.size()) {
    throw DataError("metrics: " + std::to_string(truth.size()) + " true labels vs " +
                    std::to_string(predicted.size()) + " predictions");
  }
  ConfusionMatrix cm{};
  for (std::size_t i = 0; i < truth.size(); ++i) ++cm[index_of(truth[i])][index_of(predicted[i])];
  return cm;
}

EvalReport report_from_confusion(const ConfusionMatrix& cm) {
  EvalReport r;
  r.confusion = cm;
  std::array<double, kNumStages> row{}, col{};
  double diag = 0.0;
  for (std::size_t i = 0; i < kNumStages; ++i) {
    for (std::size_t j = 0; j < kNumStages; ++j) {
      const auto v = static_cast<double>(cm[i][j]);
      row[i] += v;
      col[j] += v;
      r.n += cm[i][j];
    }
    diag += static_cast<double>(cm[i][i]);
  }
  if (r.n == 0) throw DataError("metrics: no labels");
  const double n = static_cast<double>(r.n);
  r.accuracy = diag / n;

  double f1_sum = 0.0;
  for (std::size_t k = 0; k < kNumStages; ++k) {
    const double tp = static_cast<double>(cm[k][k]);
    const double denom = row[k] + col[k];
    r.per_class_f1[k] = denom > 0 ? 2.0 * tp / denom : 0.0;
    f1_sum += r.per_class_f1[k];
  }
  r.macro_f1 = f1_sum / static_cast<double>(kNumStages);

  double pe = 0.0;
  for (std::size_t k = 0; k < kNumStages; ++k) pe += (row[k] / n) * (col[k] / n);
  r.kappa = pe >= 1.0 ? 1.0 : (r.accuracy - pe) / (1.0 - pe);
  return r;
}

EvalReport compute_metrics(std::span<const StageLabel> truth, std::span<const StageLabel> predicted) {
  if (truth.empty()) throw DataError("metrics: no labels");
  return report_from_confusion(confusion_matrix(truth, predicted));
}

ConfusionMatrix& operator+=(ConfusionMatrix& a, const ConfusionMatrix& b) {
  for (std::size_t i = 0; i < kNumStages; ++i) {
    for (std::size_t j = 0; j < kNumStages; ++j) a[i][j] += b[i][j];
  }
  return a;
}

nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json per_class = nlohmann::json::object();
  for (std::size_t k = 0; k < kNumStages; ++k) {
    per_class[std::string(to_string(stage_from_index(k)))] = r.per_class_f1[k];
  }
  return {{"accuracy", r.accuracy}, {"macro_f1", r.macro_f1}, {"kappa", r.kappa},
          {"per_class_f1", per_class}, {"confusion", r.confusion}, {"n", r.n}};
}

}  // namespace sleeptl
