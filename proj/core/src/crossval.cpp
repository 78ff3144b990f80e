// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/crossval.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "sleeptl/error.hpp"

namespace sleeptl {

namespace {

void check_distinct(const std::vector<std::string>& subjects) {
  std::set<std::string> seen;
  for (const auto& s : subjects) {
    if (!seen.insert(s).second) throw DataError("subject '" + s + "' is listed twice");
  }
}

Fold make_fold(const std::vector<std::string>& subjects, const std::set<std::string>& test,
               std::size_t n_validation, std::uint64_t seed) {
  Fold f;
  std::vector<std::string> rest;
  for (const auto& s : subjects) (test.count(s) ? f.test : rest).push_back(s);
  if (n_validation >= rest.size()) {
    throw ConfigError(std::to_string(n_validation) + " validation subjects leave no training subject");
  }
  std::vector<std::size_t> order(rest.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::set<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_validation));
  for (std::size_t i = 0; i < rest.size(); ++i) (val.count(i) ? f.validation : f.train).push_back(rest[i]);
  return f;
}

}  // namespace

std::vector<Fold> leave_one_out(const std::vector<std::string>& subjects,
                                std::size_t n_validation, std::uint64_t seed) {
  return k_fold(subjects, subjects.size(), n_validation, seed);
}

std::vector<Fold> k_fold(const std::vector<std::string>& subjects, std::size_t k,
                         std::size_t n_validation, std::uint64_t seed) {
  check_distinct(subjects);
  if (k < 2 || k > subjects.size()) {
    throw ConfigError("cannot make " + std::to_string(k) + " folds from " +
                      std::to_string(subjects.size()) + " subjects");
  }
  std::vector<std::string> order = subjects;
  if (k != subjects.size()) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Fold> folds;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t size = subjects.size() / k + (i < subjects.size() % k ? 1 : 0);
    std::set<std::string> test(order.begin() + static_cast<std::ptrdiff_t>(pos),
                               order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
    folds.push_back(make_fold(subjects, test, n_validation, seed + 1 + i));
  }
  return folds;
}

void check_folds(const std::vector<Fold>& folds) {
  std::set<std::string> tested;
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const auto& f = folds[i];
    std::set<std::string> in_fold;
    for (const auto* part : {&f.train, &f.validation, &f.test}) {
      for (const auto& s : *part) {
        if (!in_fold.insert(s).second) {
          throw DataError("fold " + std::to_string(i) + ": subject '" + s +
                          "' appears in more than one split");
        }
      }
    }
    if (f.test.empty()) throw DataError("fold " + std::to_string(i) + " has no test subject");
    for (const auto& s : f.test) {
      if (!tested.insert(s).second) {
        throw DataError("subject '" + s + "' is tested in more than one fold");
      }
    }
  }
}

nlohmann::json folds_to_json(const std::vector<Fold>& folds) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& f : folds) {
    arr.push_back({{"train", f.train}, {"validation", f.validation}, {"test", f.test}});
  }
  return {{"folds", arr}};
}

std::vector<Fold> folds_from_json(const nlohmann::json& j) {
  std::vector<Fold> out;
  try {
    for (const auto& f : j.at("folds")) {
      out.push_back({f.value("train", std::vector<std::string>{}),
                     f.value("validation", std::vector<std::string>{}),
                     f.at("test").get<std::vector<std::string>>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("folds", e.what());
  }
  check_folds(out);
  return out;
}

CrossValidationResult cross_validate(const std::vector<Fold>& folds, const FoldPipeline& pipeline) {
  check_folds(folds);
  CrossValidationResult r;
  ConfusionMatrix pooled{};
  for (std::size_t i = 0; i < folds.size(); ++i) {
    const FoldOutcome out = pipeline(folds[i], i);
    const auto cm = confusion_matrix(out.truth, out.predicted);
    r.folds.push_back(report_from_confusion(cm));
    pooled += cm;
  }
  r.pooled = report_from_confusion(pooled);
  return r;
}

}  // namespace sleeptl
