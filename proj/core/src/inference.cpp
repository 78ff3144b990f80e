// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/inference.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "sleeptl/error.hpp"

namespace sleeptl {

std::string to_string(FusionRule r) {
  return r == FusionRule::Additive ? "additive" : "multiplicative";
}

FusionRule parse_fusion_rule(const std::string& name) {
  if (name == "multiplicative") return FusionRule::Multiplicative;
  if (name == "additive") return FusionRule::Additive;
  throw ParseError("fusion", "unknown fusion rule '" + name + "'");
}

std::size_t argmax_lowest(const Posterior& p) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < p.size(); ++k) {
    if (p[k] > p[best]) best = k;
  }
  return best;
}

Aggregate aggregate(std::span<const Posterior> decisions, FusionRule rule) {
  if (decisions.empty()) throw DataError("aggregate: epoch received no decisions");
  Aggregate out;
  if (decisions.size() == 1) {
    out.posterior = decisions.front();
  } else if (rule == FusionRule::Additive) {
    for (const auto& d : decisions) {
      for (std::size_t k = 0; k < kNumStages; ++k) out.posterior[k] += d[k];
    }
    for (auto& v : out.posterior) v /= static_cast<double>(decisions.size());
  } else {
    Posterior logp{};
    for (const auto& d : decisions) {
      for (std::size_t k = 0; k < kNumStages; ++k) logp[k] += std::log(std::max(d[k], kProbFloor));
    }
    for (auto& v : logp) v /= static_cast<double>(decisions.size());
    const double mx = *std::max_element(logp.begin(), logp.end());
    double z = 0.0;
    for (std::size_t k = 0; k < kNumStages; ++k) {
      out.posterior[k] = std::exp(logp[k] - mx);
      z += out.posterior[k];
    }
    for (auto& v : out.posterior) v /= z;
  }
  out.label = stage_from_index(argmax_lowest(out.posterior));
  return out;
}

std::vector<std::vector<std::pair<std::size_t, std::size_t>>> sequence_routing(std::size_t n,
                                                                                std::size_t L) {
  if (L == 0) throw ConfigError("sequence length must be positive");
  if (n < L) {
    throw DataError("run of " + std::to_string(n) + " epochs is shorter than the sequence length " +
                    std::to_string(L));
  }
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> out(n);
  for (std::size_t s = 0; s + L <= n; ++s) {
    for (std::size_t l = 0; l < L; ++l) out[s + l].emplace_back(s, l);
  }
  return out;
}

std::vector<StageLabel> HypnogramPrediction::labels() const {
  std::vector<StageLabel> out;
  out.reserve(epochs.size());
  for (const auto& e : epochs) out.push_back(e.label);
  return out;
}

namespace {

constexpr std::size_t kFeatureChunk = 128;

/// Epoch features of epochs [begin, begin + count), [count, D]. In evaluation
/// mode the epoch block sees each epoch on its own, so features are computed
/// once per epoch and shared by every sequence covering it.
std::vector<double> run_features(const SequenceModel& model, const PreparedRecording& rec,
                                 std::size_t begin, std::size_t count, std::size_t& dim) {
  const layers::ForwardContext ctx{};
  std::vector<double> out;
  for (std::size_t c0 = 0; c0 < count; c0 += kFeatureChunk) {
    const std::size_t m = std::min(kFeatureChunk, count - c0);
    std::vector<std::size_t> starts(m);
    for (std::size_t i = 0; i < m; ++i) starts[i] = begin + c0 + i;
    Batch batch = make_batch(rec, starts, 1);
    ad::Tensor x = model.epoch_features(batch.input, ctx);
    dim = x.shape()[1];
    out.insert(out.end(), x.data().begin(), x.data().end());
  }
  return out;
}

}  // namespace

HypnogramPrediction predict_recording(const SequenceModel& model, const PreparedRecording& rec,
                                      const PredictOptions& opts) {
  const std::size_t L = model.config().seq_len;
  if (opts.batch_size == 0) throw ConfigError("prediction batch size must be positive");
  HypnogramPrediction pred;
  pred.recording_id = rec.id;
  pred.subject = rec.subject;
  pred.epoch_index = rec.epoch_index;
  pred.truth = rec.labels;
  pred.epochs.resize(rec.n_epochs());
  const layers::ForwardContext ctx{};

  for (const auto& run : rec.runs()) {
    const auto routing = sequence_routing(run.count, L);
    std::size_t dim = 0;
    const auto feats = run_features(model, rec, run.start, run.count, dim);
    const std::size_t n_seq = run.count - L + 1;
    for (std::size_t s0 = 0; s0 < n_seq; s0 += opts.batch_size) {
      const std::size_t B = std::min(opts.batch_size, n_seq - s0);
      std::vector<double> x(L * B * dim);
      for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t b = 0; b < B; ++b) {
          const double* src = feats.data() + (s0 + b + l) * dim;
          std::copy(src, src + dim, x.begin() + static_cast<std::ptrdiff_t>((l * B + b) * dim));
        }
      }
      ad::Tensor xt = ad::Tensor::from_data({L * B, dim}, std::move(x));
      ad::Tensor probs = model.head().forward(model.sequence_outputs(xt, B, L, ctx));
      const auto p = probs.data();
      for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t b = 0; b < B; ++b) {
          Posterior post{};
          std::copy_n(p.begin() + static_cast<std::ptrdiff_t>((l * B + b) * kNumStages), kNumStages,
                      post.begin());
          pred.epochs[run.start + s0 + b + l].contributions.push_back(post);
        }
      }
    }
    for (std::size_t e = 0; e < run.count; ++e) {
      auto& ep = pred.epochs[run.start + e];
      if (ep.contributions.size() != routing[e].size()) {
        throw Error("predict_recording: epoch " + std::to_string(e) + " received " +
                    std::to_string(ep.contributions.size()) + " decisions, expected " +
                    std::to_string(routing[e].size()));
      }
      const auto agg = aggregate(ep.contributions, opts.fusion);
      ep.posterior = agg.posterior;
      ep.label = agg.label;
    }
  }
  return pred;
}

EvalReport evaluate_predictions(std::span<const HypnogramPrediction> preds) {
  ConfusionMatrix cm{};
  for (const auto& p : preds) cm += confusion_matrix(p.truth, p.labels());
  return report_from_confusion(cm);
}

void write_predictions_csv(std::span<const HypnogramPrediction> preds,
                           const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "recording,epoch_index,true,predicted";
  for (std::size_t k = 0; k < kNumStages; ++k) out << ",p_" << to_string(stage_from_index(k));
  out << "\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (const auto& p : preds) {
    for (std::size_t e = 0; e < p.epochs.size(); ++e) {
      out << p.recording_id << ',' << p.epoch_index[e] << ',' << to_string(p.truth[e]) << ','
          << to_string(p.epochs[e].label);
      for (double v : p.epochs[e].posterior) out << ',' << v;
      out << "\n";
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

}  // namespace sleeptl
