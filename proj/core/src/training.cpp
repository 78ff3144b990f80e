// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>

#include "json_fields.hpp"
#include "sleeptl/adam.hpp"
#include "sleeptl/error.hpp"

namespace sleeptl {

using json = nlohmann::json;

void TrainConfig::validate() const {
  if (!(lr > 0)) throw ConfigError("train.lr must be positive");
  if (batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
  if (max_passes == 0) throw ConfigError("train.max_passes must be positive");
  if (eval_every == 0) throw ConfigError("train.eval_every must be positive");
  if (hop == 0) throw ConfigError("train.hop must be positive");
  if (eval_batch_size == 0) throw ConfigError("train.eval_batch_size must be positive");
  if (l2 && *l2 < 0) throw ConfigError("train.l2 must be non-negative");
  if (clip_norm < 0) throw ConfigError("train.clip_norm must be non-negative");
}

json to_json(const TrainConfig& c) {
  json j = {{"lr", c.lr},
            {"batch_size", c.batch_size},
            {"max_passes", c.max_passes},
            {"early_stop_patience", c.early_stop_patience},
            {"eval_every", c.eval_every},
            {"seed", c.seed},
            {"mean_over_batch", c.mean_over_batch},
            {"clip_norm", c.clip_norm},
            {"hop", c.hop},
            {"eval_batch_size", c.eval_batch_size}};
  j["l2"] = c.l2 ? json(*c.l2) : json(nullptr);
  j["max_steps"] = c.max_steps ? json(*c.max_steps) : json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  const std::string w = "train";
  detail::check_keys(j, {"lr", "batch_size", "max_passes", "early_stop_patience", "eval_every",
                         "l2", "seed", "max_steps", "mean_over_batch", "clip_norm", "hop",
                         "eval_batch_size"},
                     w);
  TrainConfig c;
  detail::read_opt(j, "lr", c.lr, w);
  detail::read_opt(j, "batch_size", c.batch_size, w);
  detail::read_opt(j, "max_passes", c.max_passes, w);
  detail::read_opt(j, "early_stop_patience", c.early_stop_patience, w);
  detail::read_opt(j, "eval_every", c.eval_every, w);
  detail::read_opt(j, "seed", c.seed, w);
  if (j.contains("max_steps") && !j.at("max_steps").is_null()) {
    std::size_t v = 0;
    detail::read_opt(j, "max_steps", v, w);
    c.max_steps = v;
  }
  detail::read_opt(j, "mean_over_batch", c.mean_over_batch, w);
  detail::read_opt(j, "clip_norm", c.clip_norm, w);
  detail::read_opt(j, "hop", c.hop, w);
  detail::read_opt(j, "eval_batch_size", c.eval_batch_size, w);
  if (j.contains("l2") && !j.at("l2").is_null()) {
    double v = 0.0;
    detail::read_opt(j, "l2", v, w);
    c.l2 = v;
  }
  c.validate();
  return c;
}

EarlyStopper::EarlyStopper(std::size_t patience) : patience_(patience) {}

bool EarlyStopper::update(double metric, std::size_t step) {
  if (!best_ || metric > *best_) {
    best_ = metric;
    best_step_ = step;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

double ensemble_accuracy(const SequenceModel& model, const std::vector<PreparedRecording>& recs,
                         std::size_t batch_size) {
  std::size_t correct = 0, total = 0;
  PredictOptions opts;
  opts.batch_size = batch_size;
  for (const auto& r : recs) {
    const auto pred = predict_recording(model, r, opts);
    for (std::size_t e = 0; e < pred.epochs.size(); ++e) {
      correct += pred.epochs[e].label == pred.truth[e] ? 1 : 0;
    }
    total += pred.epochs.size();
  }
  if (total == 0) throw DataError("no epochs to evaluate");
  return static_cast<double>(correct) / static_cast<double>(total);
}

namespace {

void check_disjoint(const std::vector<PreparedRecording>& a, const std::vector<PreparedRecording>& b,
                    const std::string& what) {
  const auto sa = subjects_of(a);
  const std::set<std::string> sb_set = [&] {
    auto v = subjects_of(b);
    return std::set<std::string>(v.begin(), v.end());
  }();
  for (const auto& s : sa) {
    if (sb_set.count(s)) throw DataError("subject '" + s + "' is in both the training and " + what + " sets");
  }
}

/// Restores every parameter's requires-grad flag on scope exit.
struct TrainableGuard {
  ParameterStore& store;
  ~TrainableGuard() { store.set_trainable({}); }
};

}  // namespace

TrainResult train(SequenceModel& model, const std::vector<PreparedRecording>& train_set,
                  const std::vector<PreparedRecording>& val_set, const TrainConfig& config,
                  const TrainHooks& hooks) {
  config.validate();
  check_disjoint(train_set, val_set, "validation");
  if (hooks.monitor) check_disjoint(train_set, *hooks.monitor, "monitor");

  const std::size_t L = model.config().seq_len;
  const auto sequences = enumerate_sequences(train_set, L, config.hop);
  if (sequences.size() < 2) {
    throw DataError("training needs at least 2 sequences of " + std::to_string(L) +
                    " epochs, found " + std::to_string(sequences.size()));
  }
  const double lambda = config.l2.value_or(model.config().l2);

  auto& store = model.params();
  store.set_trainable(hooks.frozen);
  TrainableGuard guard{store};
  AdamConfig adam_cfg;
  adam_cfg.lr = config.lr;
  adam_cfg.clip_norm = config.clip_norm;
  Adam adam(store, adam_cfg);

  std::mt19937_64 shuffle_rng(config.seed);
  std::mt19937_64 dropout_rng(config.seed ^ 0x9E3779B97F4A7C15ULL);
  layers::ForwardContext ctx{true, &dropout_rng, hooks.frozen};

  TrainResult result;
  const bool has_val = !val_set.empty();
  const bool evaluating = has_val || hooks.monitor || hooks.on_eval;
  EarlyStopper stopper(config.early_stop_patience);
  std::vector<std::vector<double>> best_values;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  bool stop = false;

  auto evaluate = [&](std::size_t step) {
    CurvePoint pt;
    pt.step = step;
    if (loss_count > 0) pt.train_loss = loss_sum / static_cast<double>(loss_count);
    loss_sum = 0.0;
    loss_count = 0;
    if (has_val) {
      pt.val_accuracy = ensemble_accuracy(model, val_set, config.eval_batch_size);
      if (stopper.update(*pt.val_accuracy, step)) best_values = store.values();
      if (stopper.should_stop()) {
        result.early_stopped = true;
        stop = true;
      }
    }
    if (hooks.monitor) pt.monitor_accuracy = ensemble_accuracy(model, *hooks.monitor, config.eval_batch_size);
    result.curve.push_back(pt);
    if (hooks.on_eval && !hooks.on_eval(pt, model)) stop = true;
  };

  if (evaluating) evaluate(0);
  std::vector<SequenceRef> order = sequences;
  std::size_t step = 0;
  for (std::size_t pass = 0; pass < config.max_passes && !stop; ++pass) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t b0 = 0; b0 < order.size() && !stop; b0 += config.batch_size) {
      if (config.max_steps && step >= *config.max_steps) {
        stop = true;
        break;
      }
      const std::size_t n = std::min(config.batch_size, order.size() - b0);
      if (n < 2) break;
      const std::span<const SequenceRef> seqs(order.data() + b0, n);
      for (const auto& s : seqs) result.trained_subjects.insert(train_set[s.recording].subject);
      const Batch batch = make_batch(train_set, seqs, L);
      ad::Tensor probs = model.forward(batch.input, ctx);
      ad::Tensor loss = sequence_loss(probs, batch.targets, L, &store, lambda, config.mean_over_batch);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("training loss became non-finite at step " + std::to_string(step));
      }
      store.zero_grad();
      ad::backward(loss);
      adam.step(hooks.frozen);
      ++step;
      loss_sum += value;
      ++loss_count;
      if (evaluating && step % config.eval_every == 0) evaluate(step);
    }
  }
  if (evaluating && (result.curve.empty() || result.curve.back().step != step)) evaluate(step);
  result.steps = step;
  result.best_step = step;
  if (has_val) {
    result.best_val_accuracy = stopper.best();
    result.best_step = stopper.best_step();
    if (!best_values.empty()) store.assign_values(best_values);
  }
  store.zero_grad();
  return result;
}

void write_curve_csv(const std::vector<CurvePoint>& curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "step,split,metric,value\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& p : curve) {
    if (p.train_loss) out << p.step << ",train,loss," << *p.train_loss << "\n";
    if (p.val_accuracy) out << p.step << ",validation,accuracy," << *p.val_accuracy << "\n";
    if (p.monitor_accuracy) out << p.step << ",monitor,accuracy," << *p.monitor_accuracy << "\n";
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace sleeptl
