// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "commands.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>
#include <set>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sleeptl/canonical_io.hpp"
#include "sleeptl/checkpoint.hpp"
#include "sleeptl/crossval.hpp"
#include "sleeptl/error.hpp"
#include "sleeptl/experiment.hpp"
#include "sleeptl/hash.hpp"
#include "sleeptl/synthdomain.hpp"
#include "sleeptl/transfer.hpp"

extern char** environ;

namespace sleeptl::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_json(const fs::path& path, const json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << "\n";
  if (!out) throw DataError("failed writing " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.filename().string(), e.what());
  }
}

ExperimentConfig load_config(const fs::path& path, const Overrides& o) {
  ExperimentConfig c = load_experiment_config(path);
  if (o.seed) {
    c.seed = *o.seed;
    c.train.seed = *o.seed;
    if (c.finetune) c.finetune->seed = *o.seed;
  }
  if (o.output) c.output = *o.output;
  if (o.steps) {
    c.train.max_steps = *o.steps;
    if (c.finetune) c.finetune->max_steps = *o.steps;
  }
  if (o.lr) {
    c.train.lr = *o.lr;
    if (c.finetune) c.finetune->lr = *o.lr;
  }
  if (o.strategy) c.strategy = parse_finetune_strategy(*o.strategy);
  if (o.scenario) c.scenario = parse_transfer_scenario(*o.scenario);
  if (o.checkpoint) c.checkpoint = fs::path(*o.checkpoint);
  c.train.validate();
  c.finetune_config().validate();
  return c;
}

const DataSource& require(const std::optional<DataSource>& s, const char* name) {
  if (!s) throw ConfigError(std::string("config.") + name + ": missing");
  return *s;
}

std::vector<std::string> pick_subjects(std::vector<std::string> subjects, std::size_t n,
                                       std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::shuffle(subjects.begin(), subjects.end(), rng);
  subjects.resize(std::min(n, subjects.size()));
  return subjects;
}

TransferData fold_data(const std::vector<Recording>& recs, const Fold& f) {
  return {filter_subjects(recs, f.train), filter_subjects(recs, f.validation),
          filter_subjects(recs, f.test)};
}

json pooled_reports(const std::vector<json>& fold_reports) {
  ConfusionMatrix before{}, after{};
  for (const auto& r : fold_reports) {
    before += r.at("metrics_before").at("confusion").get<ConfusionMatrix>();
    after += r.at("metrics_after").at("confusion").get<ConfusionMatrix>();
  }
  return {{"metrics_before", to_json(report_from_confusion(before))},
          {"metrics_after", to_json(report_from_confusion(after))}};
}

fs::path fold_dir(const fs::path& out, std::size_t i) { return out / ("fold_" + std::to_string(i)); }

void run_fold(const ExperimentConfig& c, const Checkpoint& source, const std::vector<Recording>& target,
              const Fold& fold, std::size_t index) {
  TransferOptions opts;
  opts.refit_normalization = c.refit_normalization;
  opts.predict.fusion = c.fusion;
  auto result = run_transfer(source, fold_data(target, fold), c.scenario, c.strategy,
                             c.finetune_config(), opts);
  const fs::path dir = fold_dir(c.output, index);
  fs::create_directories(dir);
  save_checkpoint(result.checkpoint, dir / "checkpoint");
  json report = to_json(result.report);
  report["fold"] = index;
  report["test_subjects"] = fold.test;
  report["source_checkpoint_hash"] = c.checkpoint ? checkpoint_hash(*c.checkpoint) : "";
  report["output_checkpoint_hash"] = checkpoint_hash(dir / "checkpoint");
  write_json(dir / "report.json", report);
  write_curve_csv(result.training.curve, dir / "curve.csv");
  write_predictions_csv(result.predictions, dir / "predictions.csv");
}

int spawn_folds(const fs::path& config, const Overrides& o, std::size_t n_folds, std::size_t jobs) {
  std::vector<std::string> base = {"/proc/self/exe", "transfer", "--config", config.string()};
  if (o.seed) base.insert(base.end(), {"--seed", std::to_string(*o.seed)});
  if (o.output) base.insert(base.end(), {"--output", *o.output});
  if (o.steps) base.insert(base.end(), {"--steps", std::to_string(*o.steps)});
  if (o.lr) {
    std::ostringstream lr;
    lr.precision(17);
    lr << *o.lr;
    base.insert(base.end(), {"--lr", lr.str()});
  }
  if (o.strategy) base.insert(base.end(), {"--strategy", *o.strategy});
  if (o.scenario) base.insert(base.end(), {"--scenario", *o.scenario});
  if (o.checkpoint) base.insert(base.end(), {"--checkpoint", *o.checkpoint});
  const std::string exe = fs::read_symlink("/proc/self/exe").string();

  std::size_t next = 0, running = 0;
  int status_all = 0;
  auto reap = [&] {
    int status = 0;
    if (::wait(&status) > 0) {
      --running;
      const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 2;
      status_all = std::max(status_all, code);
    }
  };
  while (next < n_folds) {
    while (running >= jobs) reap();
    std::vector<std::string> args = base;
    args.insert(args.end(), {"--fold", std::to_string(next)});
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    argv.push_back(nullptr);
    pid_t pid = 0;
    if (posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ) != 0) {
      throw Error("failed to start a worker for fold " + std::to_string(next));
    }
    ++running;
    ++next;
  }
  while (running > 0) reap();
  return status_all;
}

}  // namespace

int cmd_prepare(const PrepareArgs& args) {
  const auto recs = ingest_dataset_dir(args.input);
  save_dataset(recs, args.output);
  RunManifest m;
  m.command = "prepare";
  m.config = {{"input", args.input.string()}, {"output", args.output.string()}};
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(args.input)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) m.inputs.emplace_back(f.filename().string(), sha256_file(f));
  const auto cache = args.cache ? args.cache : cache_dir_from_env();
  if (cache) {
    m.config["cache"] = cache->string();
    for (const auto& r : recs) prepare_cached(r, InputKind::Spectrogram, StftParams{}, cache);
  }
  write_run_manifest(m, args.output / "run");
  std::cout << "prepared " << recs.size() << " recordings into " << args.output.string() << "\n";
  return 0;
}

int cmd_synth(const SynthArgs& args) {
  DomainSpec spec = args.spec ? domain_spec_from_json(read_json(*args.spec)) : default_domain_spec();
  if (args.subjects) spec.n_subjects = *args.subjects;
  if (args.epochs) spec.epochs_per_subject = *args.epochs;
  if (args.seed) spec.seed = *args.seed;
  if (args.name) spec.name = *args.name;
  if (!args.channels.empty()) spec.channels = args.channels;
  spec.validate();
  const auto recs = generate_domain(spec);
  save_dataset(recs, args.output);
  RunManifest m;
  m.command = "synth";
  m.config = to_json(spec);
  m.seed = spec.seed;
  write_run_manifest(m, args.output / "run");
  std::cout << "generated " << recs.size() << " recordings into " << args.output.string() << "\n";
  return 0;
}

int cmd_pretrain(const fs::path& config, const Overrides& o) {
  const ExperimentConfig c = load_config(config, o);
  const auto recs = load_source(require(c.source, "source"));
  const auto cache = cache_dir_from_env();
  const auto scenario = scenario_spec(c.scenario);
  if (c.model.n_channels != scenario.source_channels.size()) {
    throw ConfigError("model.n_channels is " + std::to_string(c.model.n_channels) + " but scenario " +
                      to_string(c.scenario) + " uses " + std::to_string(scenario.source_channels.size()) +
                      " source channels");
  }

  const auto subjects = subjects_of(recs);
  const auto val_subjects = pick_subjects(subjects, c.pretrain_validation, c.seed);
  std::vector<std::string> train_subjects;
  for (const auto& s : subjects) {
    if (std::find(val_subjects.begin(), val_subjects.end(), s) == val_subjects.end()) train_subjects.push_back(s);
  }
  if (train_subjects.empty()) throw ConfigError("pretrain_validation leaves no training subject");

  InputPipeline pipeline;
  pipeline.kind = input_kind(c.model.kind);
  pipeline.channels = scenario.source_channels;
  pipeline.stft = c.stft;
  auto train_p = apply_pipeline(filter_subjects(recs, train_subjects), pipeline, cache);
  if (pipeline.kind == InputKind::Spectrogram) {
    pipeline.normalization = fit_normalization(train_p, "train");
    for (auto& r : train_p) normalize_in_place(r, *pipeline.normalization);
  }
  const auto val_p = apply_pipeline(filter_subjects(recs, val_subjects), pipeline, cache);

  auto model = build_model(c.model, c.seed);
  const auto result = train(*model, train_p, val_p, c.train);
  Provenance prov;
  prov.source_domain = c.source->synth ? c.source->synth->name : c.source->dataset->string();
  prov.steps = result.steps;
  prov.seed = c.seed;
  prov.note = "pretrain";
  fs::create_directories(c.output);
  save_checkpoint(capture_checkpoint(*model, pipeline, prov), c.output / "checkpoint");
  write_curve_csv(result.curve, c.output / "curve.csv");
  json report = {{"steps", result.steps},
                 {"best_step", result.best_step},
                 {"early_stopped", result.early_stopped},
                 {"train_subjects", train_subjects},
                 {"validation_subjects", val_subjects},
                 {"checkpoint_hash", checkpoint_hash(c.output / "checkpoint")}};
  report["best_val_accuracy"] = result.best_val_accuracy ? json(*result.best_val_accuracy) : json(nullptr);
  write_json(c.output / "report.json", report);

  RunManifest m;
  m.command = "pretrain";
  m.config = to_json(c);
  m.seed = c.seed;
  m.inputs.emplace_back("source", dataset_digest(recs));
  write_run_manifest(m, c.output);
  std::cout << "pretrained " << result.steps << " steps; checkpoint at "
            << (c.output / "checkpoint").string() << "\n";
  return 0;
}

int cmd_transfer(const fs::path& config, const Overrides& o, std::size_t jobs,
                 std::optional<std::size_t> only_fold) {
  const ExperimentConfig c = load_config(config, o);
  if (!c.checkpoint) throw ConfigError("config.checkpoint: missing");
  const Checkpoint source = load_checkpoint(*c.checkpoint);
  const auto target = load_source(require(c.target, "target"));
  const auto folds = make_folds(c.folds, subjects_of(target), c.seed);

  if (only_fold) {
    if (*only_fold >= folds.size()) throw ConfigError("--fold out of range");
    run_fold(c, source, target, folds[*only_fold], *only_fold);
    return 0;
  }
  if (jobs > 1 && folds.size() > 1) {
    const int code = spawn_folds(config, o, folds.size(), jobs);
    if (code != 0) return code;
  } else {
    for (std::size_t i = 0; i < folds.size(); ++i) run_fold(c, source, target, folds[i], i);
  }

  std::vector<json> reports;
  for (std::size_t i = 0; i < folds.size(); ++i) reports.push_back(read_json(fold_dir(c.output, i) / "report.json"));
  json pooled = pooled_reports(reports);
  std::vector<std::string> frozen;
  for (auto g : frozen_groups(c.strategy)) frozen.emplace_back(to_string(g));
  json summary = {{"scenario", to_string(c.scenario)},
                  {"strategy", to_string(c.strategy)},
                  {"frozen_groups", frozen},
                  {"n_folds", folds.size()},
                  {"folds", reports},
                  {"pooled", pooled}};
  write_json(c.output / "report.json", summary);
  write_json(c.output / "folds.json", folds_to_json(folds));

  RunManifest m;
  m.command = "transfer";
  m.config = to_json(c);
  m.seed = c.seed;
  m.inputs.emplace_back("checkpoint", checkpoint_hash(*c.checkpoint));
  m.inputs.emplace_back("target", dataset_digest(target));
  write_run_manifest(m, c.output);
  std::cout << "transfer " << to_string(c.strategy) << ": pooled accuracy "
            << pooled["metrics_before"]["accuracy"].get<double>() << " -> "
            << pooled["metrics_after"]["accuracy"].get<double>() << " over " << folds.size()
            << " folds\n";
  return 0;
}

int cmd_evaluate(const EvaluateArgs& args) {
  const Checkpoint ckpt = load_checkpoint(args.checkpoint);
  const auto model = instantiate(ckpt);
  const auto recs = load_dataset(args.dataset);
  std::vector<Recording> selected = recs;
  std::vector<Fold> folds;
  if (args.folds) {
    folds = folds_from_json(read_json(*args.folds));
    std::vector<std::string> test;
    for (const auto& f : folds) test.insert(test.end(), f.test.begin(), f.test.end());
    selected = filter_subjects(recs, test);
  }
  if (selected.empty()) throw DataError("no recordings to evaluate");
  const auto prepared = apply_pipeline(selected, ckpt.pipeline, cache_dir_from_env());
  PredictOptions opts;
  opts.fusion = parse_fusion_rule(args.fusion);
  std::vector<HypnogramPrediction> preds;
  for (const auto& r : prepared) preds.push_back(predict_recording(*model, r, opts));
  const EvalReport report = evaluate_predictions(preds);

  fs::create_directories(args.output);
  write_predictions_csv(preds, args.output / "predictions.csv");
  json per_recording = json::array();
  for (const auto& p : preds) {
    per_recording.push_back({{"id", p.recording_id}, {"metrics", to_json(compute_metrics(p.truth, p.labels()))}});
  }
  write_json(args.output / "report.json", {{"metrics", to_json(report)},
                                           {"fusion", args.fusion},
                                           {"recordings", per_recording}});
  RunManifest m;
  m.command = "evaluate";
  m.config = {{"checkpoint", args.checkpoint.string()}, {"dataset", args.dataset.string()},
              {"fusion", args.fusion}};
  if (args.folds) m.config["folds"] = args.folds->string();
  m.inputs.emplace_back("checkpoint", checkpoint_hash(args.checkpoint));
  m.inputs.emplace_back("dataset", dataset_digest(recs));
  write_run_manifest(m, args.output);
  std::cout << "accuracy " << report.accuracy << " macro_f1 " << report.macro_f1 << " kappa "
            << report.kappa << " over " << report.n << " epochs\n";
  return 0;
}

int cmd_sweep(const fs::path& config, const Overrides& o, const std::vector<std::size_t>& counts) {
  const ExperimentConfig c = load_config(config, o);
  if (!c.checkpoint) throw ConfigError("config.checkpoint: missing");
  const std::vector<std::size_t> n = counts.empty() ? c.sweep_counts : counts;
  if (n.empty()) throw ConfigError("sweep: no subject counts given");
  const Checkpoint source = load_checkpoint(*c.checkpoint);
  const auto target = load_source(require(c.target, "target"));
  const auto folds = make_folds(c.folds, subjects_of(target), c.seed);
  TransferOptions opts;
  opts.refit_normalization = c.refit_normalization;
  opts.predict.fusion = c.fusion;
  const auto curves = subject_count_sweep(source, fold_data(target, folds.front()), n, c.scenario,
                                          c.strategy, c.finetune_config(), c.seed, opts);
  fs::create_directories(c.output);
  json summary = json::array();
  for (const auto& curve : curves) {
    const std::string name = "curve_n" + std::to_string(curve.n_subjects) + ".csv";
    std::vector<CurvePoint> test_only;
    for (auto p : curve.curve) {
      p.val_accuracy.reset();
      test_only.push_back(p);
    }
    write_curve_csv(test_only, c.output / name);
    summary.push_back({{"n_subjects", curve.n_subjects},
                       {"subjects", curve.subjects},
                       {"curve", name},
                       {"recorded_points", curve.recorded},
                       {"padded_points", curve.curve.size()},
                       {"final", to_json(curve.final_metrics)}});
  }
  write_json(c.output / "sweep.json", {{"strategy", to_string(c.strategy)},
                                       {"scenario", to_string(c.scenario)},
                                       {"test_subjects", folds.front().test},
                                       {"curves", summary}});
  RunManifest m;
  m.command = "sweep";
  m.config = to_json(c);
  m.config["sweep_counts"] = n;
  m.seed = c.seed;
  m.inputs.emplace_back("checkpoint", checkpoint_hash(*c.checkpoint));
  m.inputs.emplace_back("target", dataset_digest(target));
  write_run_manifest(m, c.output);
  std::cout << "sweep wrote " << curves.size() << " curves to " << c.output.string() << "\n";
  return 0;
}

int run(int argc, char** argv) {
  CLI::App app{"Sequence-to-sequence sleep staging with transfer learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", git_describe());

  PrepareArgs prep;
  auto* prepare = app.add_subcommand("prepare", "Ingest an EDF dataset directory into canonical form");
  prepare->add_option("--input", prep.input, "Directory of <id>.edf and <id>.hyp.json files")->required();
  prepare->add_option("--output", prep.output, "Canonical dataset directory")->required();
  prepare->add_option("--cache", prep.cache, "Feature cache directory (default: $SLEEPTL_CACHE_DIR)");

  SynthArgs syn;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic domain as a canonical dataset");
  synth->add_option("--spec", syn.spec, "Domain spec JSON");
  synth->add_option("--output", syn.output, "Canonical dataset directory")->required();
  synth->add_option("--subjects", syn.subjects);
  synth->add_option("--epochs", syn.epochs, "Epochs per subject");
  synth->add_option("--seed", syn.seed);
  synth->add_option("--name", syn.name);
  synth->add_option("--channels", syn.channels, "Subset of EEG EOG EMG");

  fs::path config;
  Overrides over;
  auto add_overrides = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "Experiment config JSON")->required();
    cmd->add_option("--seed", over.seed);
    cmd->add_option("--output", over.output);
    cmd->add_option("--steps", over.steps, "Cap on optimizer steps");
    cmd->add_option("--lr", over.lr);
    cmd->add_option("--strategy", over.strategy, "all, epb+softmax, spb+softmax, softmax, none, scratch");
    cmd->add_option("--scenario", over.scenario, "eeg-eog-emg, eeg-eog, eeg, eog, eeg-to-eog");
    cmd->add_option("--checkpoint", over.checkpoint);
  };
  auto* pretrain = app.add_subcommand("pretrain", "Train a base model on the source domain");
  add_overrides(pretrain);

  std::size_t jobs = 1;
  std::optional<std::size_t> only_fold;
  auto* transfer = app.add_subcommand("transfer", "Finetune a checkpoint on the target domain per fold");
  add_overrides(transfer);
  transfer->add_option("--jobs", jobs, "Folds run in parallel worker processes")->check(CLI::PositiveNumber);
  transfer->add_option("--fold", only_fold, "Run a single fold");

  EvaluateArgs ev;
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a canonical dataset");
  evaluate->add_option("--checkpoint", ev.checkpoint)->required();
  evaluate->add_option("--dataset", ev.dataset)->required();
  evaluate->add_option("--folds", ev.folds, "Fold spec JSON; evaluates the test subjects only");
  evaluate->add_option("--output", ev.output)->required();
  evaluate->add_option("--fusion", ev.fusion, "multiplicative or additive");

  std::vector<std::size_t> counts;
  auto* sweep = app.add_subcommand("sweep", "Finetune on growing numbers of target subjects");
  add_overrides(sweep);
  sweep->add_option("--counts", counts, "Subject counts")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*prepare) return cmd_prepare(prep);
    if (*synth) return cmd_synth(syn);
    if (*pretrain) return cmd_pretrain(config, over);
    if (*transfer) return cmd_transfer(config, over, jobs, only_fold);
    if (*evaluate) return cmd_evaluate(ev);
    if (*sweep) return cmd_sweep(config, over, counts);
  } catch (const UserError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}

}  // namespace sleeptl::cli
