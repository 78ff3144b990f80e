// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/experiment.hpp"

#include <algorithm>
#include <cstdlib>
#include <random>

#include "binary_io.hpp"
#include "json_fields.hpp"
#include "sleeptl/canonical_io.hpp"
#include "sleeptl/error.hpp"
#include "sleeptl/hash.hpp"

#ifndef SLEEPTL_GIT_DESCRIBE
#define SLEEPTL_GIT_DESCRIBE "unknown"
#endif

namespace sleeptl {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path resolve(const fs::path& p, const fs::path& base) {
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

json to_json(const DataSource& s) {
  json j = json::object();
  if (s.dataset) j["dataset"] = s.dataset->string();
  if (s.synth) j["synth"] = to_json(*s.synth);
  return j;
}

DataSource data_source_from_json(const json& j, const std::string& where) {
  detail::check_keys(j, {"dataset", "synth"}, where);
  DataSource s;
  if (j.contains("dataset")) {
    std::string p;
    detail::read_opt(j, "dataset", p, where);
    s.dataset = p;
  }
  if (j.contains("synth")) s.synth = domain_spec_from_json(j.at("synth"));
  if (s.dataset.has_value() == s.synth.has_value()) {
    throw ConfigError(where + ": give exactly one of 'dataset' or 'synth'");
  }
  return s;
}

json to_json(const FoldPlan& p) {
  json j = {{"kind", p.kind}, {"k", p.k}, {"n_validation", p.n_validation}, {"n_test", p.n_test}};
  if (p.file) j["file"] = p.file->string();
  return j;
}

FoldPlan fold_plan_from_json(const json& j) {
  const std::string w = "folds";
  detail::check_keys(j, {"kind", "k", "n_validation", "n_test", "file"}, w);
  FoldPlan p;
  detail::read_opt(j, "kind", p.kind, w);
  detail::read_opt(j, "k", p.k, w);
  detail::read_opt(j, "n_validation", p.n_validation, w);
  detail::read_opt(j, "n_test", p.n_test, w);
  if (j.contains("file")) {
    std::string f;
    detail::read_opt(j, "file", f, w);
    p.file = f;
  }
  if (p.kind != "loo" && p.kind != "kfold" && p.kind != "holdout" && p.kind != "file") {
    throw ConfigError("folds.kind: unknown kind '" + p.kind + "'");
  }
  if (p.kind == "file" && !p.file) throw ConfigError("folds.file: required for kind 'file'");
  return p;
}

std::vector<Fold> make_folds(const FoldPlan& plan, const std::vector<std::string>& subjects,
                             std::uint64_t seed) {
  std::vector<Fold> folds;
  if (plan.kind == "loo") {
    folds = leave_one_out(subjects, plan.n_validation, seed);
  } else if (plan.kind == "kfold") {
    folds = k_fold(subjects, plan.k, plan.n_validation, seed);
  } else if (plan.kind == "file") {
    const std::string text = detail::read_file(*plan.file);
    try {
      folds = folds_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
      throw ParseError(plan.file->filename().string(), e.what());
    }
  } else {
    if (plan.n_test == 0 || plan.n_test + plan.n_validation >= subjects.size()) {
      throw ConfigError("folds: holdout of " + std::to_string(plan.n_test) + " test and " +
                        std::to_string(plan.n_validation) + " validation subjects leaves no training subject");
    }
    std::vector<std::string> order = subjects;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    Fold f;
    for (std::size_t i = 0; i < order.size(); ++i) {
      auto& part = i < plan.n_test ? f.test : i < plan.n_test + plan.n_validation ? f.validation : f.train;
      part.push_back(order[i]);
    }
    folds.push_back(std::move(f));
  }
  check_folds(folds);
  return folds;
}

json to_json(const ExperimentConfig& c) {
  json j = {{"model", to_json(c.model)},
            {"train", to_json(c.train)},
            {"stft", to_json(c.stft)},
            {"scenario", to_string(c.scenario)},
            {"strategy", to_string(c.strategy)},
            {"pretrain_validation", c.pretrain_validation},
            {"folds", to_json(c.folds)},
            {"sweep_counts", c.sweep_counts},
            {"output", c.output.string()},
            {"seed", c.seed},
            {"refit_normalization", c.refit_normalization},
            {"fusion", to_string(c.fusion)}};
  if (c.source) j["source"] = to_json(*c.source);
  if (c.target) j["target"] = to_json(*c.target);
  if (c.finetune) j["finetune"] = to_json(*c.finetune);
  if (c.checkpoint) j["checkpoint"] = c.checkpoint->string();
  return j;
}

ExperimentConfig experiment_config_from_json(const json& j, const fs::path& base_dir) {
  const std::string w = "config";
  detail::check_keys(j, {"source", "target", "model", "train", "finetune", "stft", "scenario",
                         "strategy", "pretrain_validation", "folds", "sweep_counts", "checkpoint",
                         "output", "seed", "refit_normalization", "fusion"},
                     w);
  ExperimentConfig c;
  auto fix_source = [&](DataSource s) {
    if (s.dataset) s.dataset = resolve(*s.dataset, base_dir);
    return s;
  };
  if (j.contains("source")) c.source = fix_source(data_source_from_json(j.at("source"), "source"));
  if (j.contains("target")) c.target = fix_source(data_source_from_json(j.at("target"), "target"));
  if (!j.contains("model")) throw ConfigError("config.model: missing");
  c.model = model_config_from_json(j.at("model"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("finetune")) c.finetune = train_config_from_json(j.at("finetune"));
  if (j.contains("stft")) c.stft = stft_params_from_json(j.at("stft"));
  std::string text;
  if (j.contains("scenario")) {
    detail::read_opt(j, "scenario", text, w);
    c.scenario = parse_transfer_scenario(text);
  }
  if (j.contains("strategy")) {
    detail::read_opt(j, "strategy", text, w);
    c.strategy = parse_finetune_strategy(text);
  }
  if (j.contains("fusion")) {
    detail::read_opt(j, "fusion", text, w);
    c.fusion = parse_fusion_rule(text);
  }
  detail::read_opt(j, "pretrain_validation", c.pretrain_validation, w);
  if (j.contains("folds")) {
    c.folds = fold_plan_from_json(j.at("folds"));
    if (c.folds.file) c.folds.file = resolve(*c.folds.file, base_dir);
  }
  detail::read_opt(j, "sweep_counts", c.sweep_counts, w);
  if (j.contains("checkpoint")) {
    detail::read_opt(j, "checkpoint", text, w);
    c.checkpoint = resolve(text, base_dir);
  }
  if (j.contains("output")) {
    detail::read_opt(j, "output", text, w);
    c.output = resolve(text, base_dir);
  }
  detail::read_opt(j, "seed", c.seed, w);
  detail::read_opt(j, "refit_normalization", c.refit_normalization, w);
  return c;
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  const std::string text = detail::read_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.filename().string(), e.what());
  }
  return experiment_config_from_json(j, path.parent_path());
}

std::vector<Recording> load_source(const DataSource& s) {
  if (s.synth) return generate_domain(*s.synth);
  if (s.dataset) return load_dataset(*s.dataset);
  throw ConfigError("data source is empty");
}

std::vector<PreparedRecording> apply_pipeline(const std::vector<Recording>& recs,
                                              const InputPipeline& pipeline,
                                              const std::optional<fs::path>& cache) {
  std::vector<PreparedRecording> out;
  out.reserve(recs.size());
  for (const auto& r : recs) {
    out.push_back(prepare_cached(select_recording_channels(r, pipeline.channels), pipeline.kind,
                                 pipeline.stft, cache));
    if (pipeline.kind == InputKind::Spectrogram && pipeline.normalization) {
      normalize_in_place(out.back(), *pipeline.normalization);
    }
  }
  return out;
}

std::optional<fs::path> cache_dir_from_env() {
  const char* v = std::getenv("SLEEPTL_CACHE_DIR");
  if (!v || !*v) return std::nullopt;
  return fs::path(v);
}

std::string git_describe() {
  const char* v = std::getenv("SLEEPTL_GIT_DESCRIBE");
  return v && *v ? v : SLEEPTL_GIT_DESCRIBE;
}

void write_run_manifest(const RunManifest& m, const fs::path& dir) {
  fs::create_directories(dir);
  json inputs = json::object();
  for (const auto& [name, hash] : m.inputs) inputs[name] = hash;
  const json j = {{"command", m.command},
                  {"config", m.config},
                  {"seed", m.seed},
                  {"git_describe", git_describe()},
                  {"inputs", inputs}};
  detail::write_file(dir / "manifest.json", j.dump(2) + "\n");
}

std::string dataset_digest(const std::vector<Recording>& recs) {
  std::string all;
  for (const auto& r : recs) all += recording_digest(r);
  return sha256_hex(all);
}

}  // namespace sleeptl
