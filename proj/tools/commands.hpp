// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace sleeptl::cli {

/// Flags that override fields of an experiment config.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::size_t> steps;
  std::optional<double> lr;
  std::optional<std::string> strategy;
  std::optional<std::string> scenario;
  std::optional<std::string> checkpoint;
};

struct PrepareArgs {
  std::filesystem::path input;
  std::filesystem::path output;
  std::optional<std::filesystem::path> cache;
};

struct SynthArgs {
  std::optional<std::filesystem::path> spec;
  std::filesystem::path output;
  std::optional<std::size_t> subjects;
  std::optional<std::size_t> epochs;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> name;
  std::vector<std::string> channels;
};

struct EvaluateArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path dataset;
  std::optional<std::filesystem::path> folds;
  std::filesystem::path output;
  std::string fusion = "multiplicative";
};

int cmd_prepare(const PrepareArgs& args);
int cmd_synth(const SynthArgs& args);
int cmd_pretrain(const std::filesystem::path& config, const Overrides& o);
/// `jobs` > 1 runs folds in worker processes; `only_fold` runs one fold
/// without writing the pooled report.
int cmd_transfer(const std::filesystem::path& config, const Overrides& o, std::size_t jobs,
                 std::optional<std::size_t> only_fold);
int cmd_evaluate(const EvaluateArgs& args);
int cmd_sweep(const std::filesystem::path& config, const Overrides& o,
              const std::vector<std::size_t>& counts);

/// Parses argv and dispatches. Exit codes: 0 success, 1 user error, 2
/// internal error.
int run(int argc, char** argv);

}  // namespace sleeptl::cli
