// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/transfer.hpp"

#include <algorithm>
#include <random>

#include "sleeptl/dataset.hpp"
#include "sleeptl/error.hpp"

namespace sleeptl {

using json = nlohmann::json;

std::string to_string(FinetuneStrategy s) {
  switch (s) {
    case FinetuneStrategy::All: return "all";
    case FinetuneStrategy::EpbSoftmax: return "epb+softmax";
    case FinetuneStrategy::SpbSoftmax: return "spb+softmax";
    case FinetuneStrategy::SoftmaxOnly: return "softmax";
    case FinetuneStrategy::None: return "none";
    case FinetuneStrategy::Scratch: return "scratch";
  }
  return "?";
}

FinetuneStrategy parse_finetune_strategy(const std::string& name) {
  for (auto s : {FinetuneStrategy::All, FinetuneStrategy::EpbSoftmax, FinetuneStrategy::SpbSoftmax,
                 FinetuneStrategy::SoftmaxOnly, FinetuneStrategy::None, FinetuneStrategy::Scratch}) {
    if (to_string(s) == name) return s;
  }
  throw ParseError("strategy", "unknown finetuning strategy '" + name + "'");
}

std::set<ParamGroup> frozen_groups(FinetuneStrategy s) {
  switch (s) {
    case FinetuneStrategy::EpbSoftmax: return {ParamGroup::SPB};
    case FinetuneStrategy::SpbSoftmax: return {ParamGroup::EPB};
    case FinetuneStrategy::SoftmaxOnly: return {ParamGroup::EPB, ParamGroup::SPB};
    case FinetuneStrategy::None: return {ParamGroup::EPB, ParamGroup::SPB, ParamGroup::SOFTMAX};
    case FinetuneStrategy::All:
    case FinetuneStrategy::Scratch: return {};
  }
  return {};
}

std::string to_string(TransferScenario s) {
  switch (s) {
    case TransferScenario::EegEogEmg: return "eeg-eog-emg";
    case TransferScenario::EegEog: return "eeg-eog";
    case TransferScenario::Eeg: return "eeg";
    case TransferScenario::Eog: return "eog";
    case TransferScenario::EegToEog: return "eeg-to-eog";
  }
  return "?";
}

TransferScenario parse_transfer_scenario(const std::string& name) {
  for (auto s : {TransferScenario::EegEogEmg, TransferScenario::EegEog, TransferScenario::Eeg,
                 TransferScenario::Eog, TransferScenario::EegToEog}) {
    if (to_string(s) == name) return s;
  }
  throw ParseError("scenario", "unknown transfer scenario '" + name + "'");
}

ScenarioSpec scenario_spec(TransferScenario s) {
  switch (s) {
    case TransferScenario::EegEogEmg: return {{"EEG", "EOG", "EMG"}, {"EEG", "EOG", "EMG"}};
    case TransferScenario::EegEog: return {{"EEG", "EOG"}, {"EEG", "EOG"}};
    case TransferScenario::Eeg: return {{"EEG"}, {"EEG"}};
    case TransferScenario::Eog: return {{"EOG"}, {"EOG"}};
    case TransferScenario::EegToEog: return {{"EEG"}, {"EOG"}};
  }
  return {};
}

json to_json(const TransferReport& r) {
  std::vector<std::string> frozen;
  for (auto g : r.frozen) frozen.emplace_back(to_string(g));
  const auto spec = scenario_spec(r.scenario);
  return {{"scenario", to_string(r.scenario)},
          {"source_channels", spec.source_channels},
          {"target_channels", spec.target_channels},
          {"strategy", to_string(r.strategy)},
          {"frozen_groups", frozen},
          {"metrics_before", to_json(r.metrics_before)},
          {"metrics_after", to_json(r.metrics_after)},
          {"steps", r.steps},
          {"seed", r.seed},
          {"source_checkpoint", r.source_checkpoint},
          {"output_checkpoint", r.output_checkpoint}};
}

namespace {

std::vector<PreparedRecording> prepare_all(const std::vector<Recording>& recs,
                                           const std::vector<std::string>& channels,
                                           const InputPipeline& pipeline) {
  std::vector<PreparedRecording> out;
  out.reserve(recs.size());
  for (const auto& r : recs) {
    out.push_back(prepare_recording(select_recording_channels(r, channels), pipeline.kind, pipeline.stft));
  }
  return out;
}

std::vector<HypnogramPrediction> predict_all(const SequenceModel& model,
                                             const std::vector<PreparedRecording>& recs,
                                             const PredictOptions& opts) {
  std::vector<HypnogramPrediction> out;
  for (const auto& r : recs) out.push_back(predict_recording(model, r, opts));
  return out;
}

}  // namespace

TransferResult run_transfer(const Checkpoint& source, const TransferData& target,
                            TransferScenario scenario, FinetuneStrategy strategy,
                            const TrainConfig& config, const TransferOptions& options) {
  if (target.test.empty()) throw DataError("transfer: target test split is empty");
  const auto spec = scenario_spec(scenario);
  ModelConfig model_config = source.config;
  model_config.n_channels = spec.target_channels.size();

  std::unique_ptr<SequenceModel> model;
  if (strategy == FinetuneStrategy::Scratch) {
    model = build_model(model_config, config.seed);
  } else {
    model = build_model(model_config, 0);
    restore_into(*model, source);
  }

  InputPipeline pipeline = source.pipeline;
  pipeline.channels = spec.target_channels;
  auto train_p = prepare_all(target.train, spec.target_channels, pipeline);
  auto val_p = prepare_all(target.validation, spec.target_channels, pipeline);
  auto test_p = prepare_all(target.test, spec.target_channels, pipeline);
  if (pipeline.kind == InputKind::Spectrogram) {
    if (strategy == FinetuneStrategy::Scratch || options.refit_normalization) {
      pipeline.normalization = fit_normalization(train_p, "train");
    }
    if (pipeline.normalization) {
      for (auto* set : {&train_p, &val_p, &test_p}) {
        for (auto& r : *set) normalize_in_place(r, *pipeline.normalization);
      }
    }
  }

  TransferResult result;
  auto& report = result.report;
  report.scenario = scenario;
  report.strategy = strategy;
  report.frozen = frozen_groups(strategy);
  report.seed = config.seed;
  report.source_checkpoint = checkpoint_digest(source);

  result.predictions = predict_all(*model, test_p, options.predict);
  report.metrics_before = evaluate_predictions(result.predictions);
  if (strategy == FinetuneStrategy::None) {
    report.metrics_after = report.metrics_before;
  } else {
    TrainHooks hooks;
    hooks.frozen = report.frozen;
    if (options.monitor_test) hooks.monitor = &test_p;
    result.training = train(*model, train_p, val_p, config, hooks);
    report.steps = result.training.steps;
    result.predictions = predict_all(*model, test_p, options.predict);
    report.metrics_after = evaluate_predictions(result.predictions);
  }

  Provenance prov = source.provenance;
  prov.steps = report.steps;
  prov.seed = config.seed;
  prov.note = "transfer " + to_string(scenario) + " " + to_string(strategy);
  result.checkpoint = capture_checkpoint(*model, pipeline, prov);
  report.output_checkpoint = checkpoint_digest(result.checkpoint);
  return result;
}

std::vector<SweepCurve> subject_count_sweep(const Checkpoint& source, const TransferData& target,
                                            const std::vector<std::size_t>& counts,
                                            TransferScenario scenario, FinetuneStrategy strategy,
                                            const TrainConfig& config, std::uint64_t seed,
                                            const TransferOptions& options) {
  const auto pool = subjects_of(target.train);
  TransferOptions opts = options;
  opts.monitor_test = true;
  std::vector<SweepCurve> out;
  for (std::size_t n : counts) {
    if (n == 0 || n > pool.size()) {
      throw DataError("sweep: cannot draw " + std::to_string(n) + " finetuning subjects from " +
                      std::to_string(pool.size()));
    }
    std::vector<std::string> order = pool;
    std::mt19937_64 rng(seed + n);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(n);

    TransferData data;
    data.train = filter_subjects(target.train, order);
    data.validation = target.validation;
    data.test = target.test;
    auto result = run_transfer(source, data, scenario, strategy, config, opts);

    SweepCurve c;
    c.n_subjects = n;
    c.subjects = order;
    c.final_metrics = result.report.metrics_after;
    if (result.training.curve.empty()) {
      CurvePoint p;
      p.monitor_accuracy = result.report.metrics_after.accuracy;
      c.curve.push_back(p);
    } else {
      c.curve = result.training.curve;
    }
    c.recorded = c.curve.size();
    out.push_back(std::move(c));
  }

  std::size_t longest = 0;
  for (const auto& c : out) longest = std::max(longest, c.curve.size());
  for (auto& c : out) {
    while (c.curve.size() < longest) {
      CurvePoint p = c.curve.back();
      p.step += config.eval_every;
      p.train_loss.reset();
      c.curve.push_back(p);
    }
  }
  return out;
}

}  // namespace sleeptl
