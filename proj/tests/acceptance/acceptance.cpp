// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Pass criterion numbers to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "grad_check.hpp"
#include "sleeptl/checkpoint.hpp"
#include "sleeptl/crossval.hpp"
#include "sleeptl/edf.hpp"
#include "sleeptl/error.hpp"
#include "sleeptl/hypnogram.hpp"
#include "sleeptl/inference.hpp"
#include "sleeptl/layers.hpp"
#include "sleeptl/metrics.hpp"
#include "sleeptl/models.hpp"
#include "sleeptl/recording.hpp"
#include "sleeptl/resample.hpp"
#include "sleeptl/synthdomain.hpp"
#include "sleeptl/training.hpp"
#include "sleeptl/transfer.hpp"
#include "toy_data.hpp"

namespace sleeptl {
namespace {

namespace fs = std::filesystem;
using ad::Tensor;
using layers::ForwardContext;
using testing::grad_check;
using testing::random_tensor;
using testing::weighted_sum;

const fs::path kData = SLEEPTL_TEST_DATA_DIR;
const std::vector<StageLabel> kAllClasses{StageLabel::W, StageLabel::N1, StageLabel::N2,
                                          StageLabel::N3, StageLabel::REM};

// Collects failed checks and a few numbers worth printing.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) failures_.push_back(what);
  }
  void note(const std::string& s) { notes_.push_back(s); }
  bool passed() const { return failures_.empty(); }
  const std::vector<std::string>& failures() const { return failures_; }
  std::string summary() const {
    std::string out;
    for (const auto& n : notes_) out += (out.empty() ? "" : "; ") + n;
    return out;
  }

 private:
  std::vector<std::string> failures_;
  std::vector<std::string> notes_;
};

std::string fmt(double v, int digits = 3) {
  std::ostringstream s;
  s.precision(digits);
  s << v;
  return s.str();
}

std::vector<Tensor> params_of(const ParameterStore& store) {
  std::vector<Tensor> out;
  for (const auto& e : store.entries()) {
    if (e.kind == ParamKind::Param) out.push_back(e.tensor);
  }
  return out;
}

std::span<double> writable(Tensor t) { return t.mutable_data(); }

// --- 1. gradient correctness ---------------------------------------------------------------------

constexpr double kLayerTol = 1e-4;
constexpr double kModelTol = 1e-3;

ForwardContext train_ctx(std::set<ParamGroup> frozen) {
  ForwardContext ctx;
  ctx.train = true;
  ctx.frozen = std::move(frozen);
  return ctx;
}

std::map<std::string, double> layer_grad_errors() {
  std::map<std::string, double> err;
  {
    std::mt19937_64 rng(1);
    ParameterStore store;
    layers::Linear fc(store, "fc", ParamGroup::SPB, 4, 3, rng);
    auto x = random_tensor({5, 4}, rng);
    auto leaves = params_of(store);
    leaves.push_back(x);
    err["linear"] = grad_check([&] { return weighted_sum(fc.forward(x)); }, leaves).max_rel_error;
  }
  {
    std::mt19937_64 rng(2);
    ParameterStore store;
    layers::BatchNorm bn(store, "bn", ParamGroup::EPB, 3);
    for (auto& v : writable(store.entries()[0].tensor)) v = 1.3;
    for (auto& v : writable(store.entries()[1].tensor)) v = -0.2;
    auto x = random_tensor({6, 3}, rng);
    auto ctx = train_ctx({ParamGroup::EPB});
    auto leaves = params_of(store);
    leaves.push_back(x);
    err["batchnorm"] =
        grad_check([&] { return weighted_sum(bn.forward(x, ctx)); }, leaves).max_rel_error;
  }
  {
    std::mt19937_64 rng(3);
    ParameterStore store;
    layers::Filterbank fb(store, "fb", ParamGroup::EPB, 6, 4, rng);
    auto x = random_tensor({5, 6}, rng);
    err["filterbank"] =
        grad_check([&] { return weighted_sum(fb.forward(x)); }, {fb.weight(), x}).max_rel_error;
  }
  {
    std::mt19937_64 rng(4);
    ParameterStore store;
    layers::RnnCell cell(store, "g", ParamGroup::SPB, layers::RnnKind::GRU, 3, 4, false, rng);
    auto x = random_tensor({4 * 2, 3}, rng);
    auto leaves = params_of(store);
    leaves.push_back(x);
    auto loss = [&] { return weighted_sum(layers::stack_steps(cell.run(x, 4, false, {}))); };
    err["gru"] = grad_check(loss, leaves).max_rel_error;
  }
  {
    std::mt19937_64 rng(5);
    ParameterStore store;
    layers::RnnCell cell(store, "g", ParamGroup::EPB, layers::RnnKind::GRU, 3, 3, true, rng);
    for (const auto& e : store.entries()) {
      if (e.name.find("beta") != std::string::npos) {
        for (auto& v : writable(e.tensor)) {
          v = std::uniform_real_distribution<double>(-0.3, 0.3)(rng);
        }
      }
    }
    auto x = random_tensor({3 * 4, 3}, rng);
    auto ctx = train_ctx({ParamGroup::EPB});
    auto leaves = params_of(store);
    leaves.push_back(x);
    auto loss = [&] { return weighted_sum(layers::stack_steps(cell.run(x, 3, true, ctx))); };
    err["gru+recurrent-bn"] = grad_check(loss, leaves).max_rel_error;
  }
  {
    std::mt19937_64 rng(6);
    ParameterStore store;
    layers::RnnCell cell(store, "l", ParamGroup::SPB, layers::RnnKind::LSTM, 3, 3, false, rng);
    auto x = random_tensor({4 * 2, 3}, rng);
    auto leaves = params_of(store);
    leaves.push_back(x);
    auto loss = [&] { return weighted_sum(layers::stack_steps(cell.run(x, 4, false, {}))); };
    err["lstm"] = grad_check(loss, leaves).max_rel_error;
  }
  {
    std::mt19937_64 rng(7);
    ParameterStore store;
    layers::BiRnn rnn(store, "r", ParamGroup::SPB, layers::RnnKind::LSTM, 2, 3, false, rng);
    layers::Linear fc(store, "o", ParamGroup::SPB, 6, 2, rng);
    auto x = random_tensor({3 * 2, 2}, rng);
    auto leaves = params_of(store);
    leaves.push_back(x);
    auto loss = [&] { return weighted_sum(layers::birnn_output(rnn.forward(x, 3, {}), fc)); };
    err["birnn+output"] = grad_check(loss, leaves).max_rel_error;
  }
  {
    std::mt19937_64 rng(8);
    ParameterStore store;
    layers::Attention att(store, "a", ParamGroup::EPB, 3, 4, rng);
    std::vector<Tensor> steps;
    for (int t = 0; t < 4; ++t) steps.push_back(random_tensor({2, 3}, rng));
    auto leaves = params_of(store);
    leaves.insert(leaves.end(), steps.begin(), steps.end());
    err["attention"] =
        grad_check([&] { return weighted_sum(att.forward(steps)); }, leaves).max_rel_error;
  }
  {
    std::mt19937_64 rng(9);
    auto x = random_tensor({2, 2, 11}, rng);
    auto w = random_tensor({3, 2, 4}, rng);
    err["conv1d"] =
        grad_check([&] { return weighted_sum(ad::conv1d(x, w, 2)); }, {x, w}).max_rel_error;
  }
  {
    // Distinct, well-separated values keep the max away from ties.
    std::vector<double> v(2 * 3 * 10);
    std::iota(v.begin(), v.end(), 0.0);
    std::shuffle(v.begin(), v.end(), std::mt19937_64(10));
    for (auto& x : v) x *= 0.1;
    auto x = Tensor::from_data({2, 3, 10}, v, true);
    err["maxpool1d"] =
        grad_check([&] { return weighted_sum(ad::maxpool1d(x, 3, 2)); }, {x}).max_rel_error;
  }
  {
    std::mt19937_64 rng(11);
    ParameterStore store;
    layers::ConvBranchConfig c;
    c.first_kernel = 5;
    c.first_stride = 2;
    c.first_filters = 2;
    c.pool1_size = c.pool1_stride = 2;
    c.n_convs = 1;
    c.kernel = 3;
    c.filters = 2;
    c.pool2_size = c.pool2_stride = 2;
    layers::ConvBranch br(store, "b", ParamGroup::EPB, 1, 24, c, rng);
    auto x = random_tensor({3, 1, 24}, rng);
    auto ctx = train_ctx({ParamGroup::EPB});
    auto leaves = params_of(store);
    leaves.push_back(x);
    err["conv-branch"] =
        grad_check([&] { return weighted_sum(br.forward(x, ctx)); }, leaves).max_rel_error;
  }
  {
    std::mt19937_64 rng(12);
    ParameterStore store;
    layers::Linear fc(store, "res", ParamGroup::SPB, 4, 3, rng);
    auto x = random_tensor({2, 4}, rng);
    auto o = random_tensor({2, 3}, rng);
    auto leaves = params_of(store);
    leaves.push_back(x);
    leaves.push_back(o);
    err["residual"] =
        grad_check([&] { return weighted_sum(layers::residual_combine(x, o, fc)); }, leaves)
            .max_rel_error;
  }
  {
    std::mt19937_64 rng(13);
    ParameterStore store;
    layers::SoftmaxHead head(store, "head", 4, 5, rng);
    auto x = random_tensor({3, 4}, rng);
    auto leaves = params_of(store);
    leaves.push_back(x);
    err["softmax-head"] =
        grad_check([&] { return weighted_sum(head.forward(x)); }, leaves).max_rel_error;
  }
  return err;
}

ModelConfig grad_ssn() {
  ModelConfig c;
  c.kind = ModelKind::SeqSleepNetPlus;
  c.seq_len = 3;
  c.n_channels = 2;
  c.dropout = 0.0;
  c.seqsleepnet.n_frames = 3;
  c.seqsleepnet.n_bins = 6;
  c.seqsleepnet.n_filters = 3;
  c.seqsleepnet.epb_hidden = 4;
  c.seqsleepnet.attention_size = 3;
  c.seqsleepnet.spb_hidden = 4;
  return c;
}

ModelConfig grad_dsn() {
  ModelConfig c;
  c.kind = ModelKind::DeepSleepNetPlus;
  c.seq_len = 3;
  c.dropout = 0.0;
  auto& d = c.deepsleepnet;
  d.n_samples = 24;
  d.fine = {5, 2, 2, 2, 2, 1, 3, 2, 2, 2};
  d.coarse = {9, 4, 2, 2, 2, 1, 3, 2, 2, 2};
  d.spb_hidden = 4;
  d.spb_layers = 2;
  d.spb_output = 4;
  return c;
}

double model_grad_error(const ModelConfig& c) {
  auto m = build_model(c, 21);
  std::mt19937_64 rng(21);
  const std::size_t batch = 2, e = batch * c.seq_len;
  ModelInput in;
  in.batch = batch;
  in.seq_len = c.seq_len;
  if (input_kind(c.kind) == InputKind::Spectrogram) {
    in.x = random_tensor({c.n_channels, c.seqsleepnet.n_frames * e, c.seqsleepnet.n_bins}, rng);
  } else {
    in.x = random_tensor({e, c.n_channels, c.deepsleepnet.n_samples}, rng);
  }
  std::vector<double> t(e * kNumStages, 0.0);
  for (std::size_t r = 0; r < e; ++r) t[r * kNumStages + rng() % kNumStages] = 1.0;
  auto targets = Tensor::from_data({e, kNumStages}, t);
  auto ctx = train_ctx({ParamGroup::EPB, ParamGroup::SPB, ParamGroup::SOFTMAX});
  ctx.rng = &rng;
  auto leaves = params_of(m->params());
  leaves.push_back(in.x);
  auto loss = [&] {
    return sequence_loss(m->forward(in, ctx), targets, c.seq_len, &m->params(), 1e-2);
  };
  return grad_check(loss, leaves, 1e-5, 600).max_rel_error;
}

void criterion_gradients(Check& chk) {
  double worst = 0.0;
  for (const auto& [name, e] : layer_grad_errors()) {
    chk.expect(e < kLayerTol, name + " rel error " + fmt(e));
    worst = std::max(worst, e);
  }
  chk.note("worst layer rel error " + fmt(worst));
  const double ssn = model_grad_error(grad_ssn());
  const double dsn = model_grad_error(grad_dsn());
  chk.expect(ssn < kModelTol, "tiny SeqSleepNet+ rel error " + fmt(ssn));
  chk.expect(dsn < kModelTol, "tiny DeepSleepNet+ rel error " + fmt(dsn));
  chk.note("SeqSleepNet+ " + fmt(ssn) + ", DeepSleepNet+ " + fmt(dsn));
}

// --- 2. loss formula -------------------------------------------------------------------------------

void criterion_loss(Check& chk) {
  auto uniform = Tensor::filled({2, 5}, 0.2);
  auto t1 = Tensor::from_data({2, 5}, {1, 0, 0, 0, 0, 0, 0, 1, 0, 0});
  const double a = sequence_loss(uniform, t1, 2, nullptr, 0.0, false).item();
  chk.expect(std::abs(a - std::log(5.0)) <= 1e-9, "uniform posteriors give " + fmt(a, 17));

  auto t2 = Tensor::from_data({2, 5}, {0, 1, 0, 0, 0, 0, 0, 0, 0, 1});
  const double b = sequence_loss(t2, t2, 2, nullptr, 0.0, false).item();
  chk.expect(std::abs(b) <= 1e-9, "perfect posteriors give " + fmt(b, 17));

  ParameterStore theta;
  theta.add_param("w", ParamGroup::SOFTMAX, {1}, {3.0});
  auto t3 = Tensor::from_data({1, 5}, {0, 0, 1, 0, 0});
  const double c = sequence_loss(t3, t3, 1, &theta, 2.0, false).item();
  chk.expect(std::abs(c - 9.0) <= 1e-9, "L2 term gives " + fmt(c, 17));
  chk.note("log5 case " + fmt(a - std::log(5.0), 2) + " off, perfect " + fmt(b, 2) +
           ", L2 " + fmt(c, 17));
}

// --- 3. overfit sanity -----------------------------------------------------------------------------

// Per-decision accuracy over every hop-1 training sequence, eval mode.
double sequence_accuracy(const SequenceModel& model, const std::vector<PreparedRecording>& recs) {
  const std::size_t L = model.config().seq_len;
  std::size_t correct = 0, total = 0;
  for (const auto& rec : recs) {
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + L <= rec.n_epochs(); ++s) starts.push_back(s);
    auto batch = make_batch(rec, starts, L);
    auto probs = model.forward(batch.input, {});
    for (std::size_t r = 0; r < batch.labels.size(); ++r) {
      Posterior p;
      for (std::size_t k = 0; k < kNumStages; ++k) p[k] = probs.data()[r * kNumStages + k];
      correct += argmax_lowest(p) == index_of(batch.labels[r]);
      ++total;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

struct OverfitOutcome {
  double accuracy = 0.0;
  std::size_t steps = 0;
  std::size_t sequences = 0;
};

OverfitOutcome overfit(const ModelConfig& mc, InputKind kind, std::uint64_t seed) {
  auto spec = default_domain_spec();
  spec.name = "overfit";
  spec.n_subjects = 2;
  spec.epochs_per_subject = 25 + mc.seq_len - 1;
  spec.seed = seed;
  std::vector<PreparedRecording> recs;
  for (const auto& r : generate_domain(spec)) recs.push_back(prepare_recording(r, kind, {}));
  if (kind == InputKind::Spectrogram) {
    auto stats = fit_normalization(recs, "train");
    for (auto& r : recs) normalize_in_place(r, stats);
  }
  OverfitOutcome out;
  out.sequences = enumerate_sequences(recs, mc.seq_len).size();

  auto model = build_model(mc, seed);
  TrainConfig tc;
  tc.lr = 3e-3;
  tc.batch_size = 10;
  tc.max_passes = 1000000;
  tc.max_steps = 2000;
  tc.eval_every = 50;
  tc.seed = seed;
  TrainHooks hooks;
  hooks.on_eval = [&](const CurvePoint& pt, const SequenceModel& m) {
    out.accuracy = sequence_accuracy(m, recs);
    out.steps = pt.step;
    return out.accuracy < 0.99;
  };
  train(*model, recs, {}, tc, hooks);
  out.accuracy = sequence_accuracy(*model, recs);
  return out;
}

void criterion_overfit(Check& chk) {
  ModelConfig ssn;
  ssn.kind = ModelKind::SeqSleepNetPlus;
  ssn.seq_len = 3;
  ssn.dropout = 0.0;
  ssn.l2 = 0.0;
  ssn.seqsleepnet.n_filters = 8;
  ssn.seqsleepnet.epb_hidden = 8;
  ssn.seqsleepnet.attention_size = 8;
  ssn.seqsleepnet.spb_hidden = 8;

  ModelConfig dsn;
  dsn.kind = ModelKind::DeepSleepNetPlus;
  dsn.seq_len = 3;
  dsn.dropout = 0.0;
  dsn.l2 = 0.0;
  dsn.deepsleepnet.fine = {50, 6, 8, 8, 8, 1, 8, 8, 4, 4};
  dsn.deepsleepnet.coarse = {400, 50, 8, 4, 4, 1, 6, 8, 2, 2};
  dsn.deepsleepnet.spb_hidden = 8;
  dsn.deepsleepnet.spb_layers = 1;
  dsn.deepsleepnet.spb_output = 8;

  const std::pair<const char*, std::pair<ModelConfig, InputKind>> cases[] = {
      {"SeqSleepNet+", {ssn, InputKind::Spectrogram}}, {"DeepSleepNet+", {dsn, InputKind::Raw}}};
  for (const auto& [name, c] : cases) {
    auto r = overfit(c.first, c.second, 5);
    chk.expect(r.sequences == 50, std::string(name) + " got " + std::to_string(r.sequences) +
                                      " sequences");
    chk.expect(r.accuracy >= 0.99, std::string(name) + " train accuracy " + fmt(r.accuracy));
    chk.note(std::string(name) + " " + fmt(r.accuracy) + " at step " + std::to_string(r.steps));
  }
}

// --- 4. freezing exactness --------------------------------------------------------------------------

StftParams coarse_stft() {
  StftParams p;
  p.win_len_s = 2.0;
  p.hop_s = 3.0;
  p.n_fft = 200;
  return p;
}

ModelConfig small_ssn(std::size_t L, std::size_t width, const StftParams& stft) {
  ModelConfig c;
  c.kind = ModelKind::SeqSleepNetPlus;
  c.seq_len = L;
  c.dropout = 0.0;
  c.seqsleepnet.n_frames = stft.n_frames(kSamplesPerEpoch);
  c.seqsleepnet.n_bins = stft.n_bins();
  c.seqsleepnet.n_filters = width;
  c.seqsleepnet.epb_hidden = width;
  c.seqsleepnet.attention_size = width;
  c.seqsleepnet.spb_hidden = width;
  return c;
}

// Fits normalization on `recs` (spectrogram models) and captures the model.
Checkpoint checkpoint_for(const SequenceModel& model, const std::vector<Recording>& recs,
                          const StftParams& stft, const std::string& domain, std::size_t steps,
                          std::uint64_t seed) {
  InputPipeline pipe;
  pipe.kind = input_kind(model.config().kind);
  pipe.channels = {"EEG"};
  pipe.stft = stft;
  if (pipe.kind == InputKind::Spectrogram) {
    std::vector<PreparedRecording> prepared;
    for (const auto& r : recs) prepared.push_back(prepare_recording(r, pipe.kind, stft));
    pipe.normalization = fit_normalization(prepared, "train");
  }
  return capture_checkpoint(model, pipe, {domain, steps, seed, ""});
}

void criterion_freezing(Check& chk) {
  using G = ParamGroup;
  using S = FinetuneStrategy;
  const std::map<S, std::set<G>> table{{S::All, {}},
                                       {S::EpbSoftmax, {G::SPB}},
                                       {S::SpbSoftmax, {G::EPB}},
                                       {S::SoftmaxOnly, {G::EPB, G::SPB}},
                                       {S::None, {G::EPB, G::SPB, G::SOFTMAX}},
                                       {S::Scratch, {}}};
  for (const auto& [s, groups] : table) {
    chk.expect(frozen_groups(s) == groups, "strategy table entry for " + to_string(s));
  }

  auto spec = default_domain_spec();
  spec.n_subjects = 3;
  spec.epochs_per_subject = 20;
  spec.seed = 41;
  auto recs = generate_domain(spec);
  TransferData data;
  data.train.assign(recs.begin(), recs.begin() + 2);
  data.test.assign(recs.begin() + 2, recs.end());

  ModelConfig dsn = grad_dsn();
  dsn.deepsleepnet.n_samples = kSamplesPerEpoch;
  dsn.deepsleepnet.fine = {50, 6, 4, 8, 8, 1, 8, 4, 4, 4};
  dsn.deepsleepnet.coarse = {400, 50, 4, 4, 4, 1, 6, 4, 2, 2};

  TrainConfig tc;
  tc.lr = 1e-2;
  tc.batch_size = 4;
  tc.max_passes = 1000000;
  tc.max_steps = 200;
  tc.seed = 3;

  std::size_t checked_models = 0;
  for (const auto& mc : {small_ssn(3, 4, coarse_stft()), dsn}) {
    auto model = build_model(mc, 9);
    const std::string kind = to_string(mc.kind);
    // Every parameter belongs to exactly one of the three groups.
    std::size_t sum = 0;
    for (auto g : kAllGroups) {
      chk.expect(model->params().param_count(g) > 0, kind + " group " + std::string(to_string(g)) + " empty");
      sum += model->params().param_count(g);
    }
    chk.expect(sum == model->params().param_count(), kind + " groups do not partition the parameters");
    auto ckpt = checkpoint_for(*model, data.train, coarse_stft(), "synth", 0, 9);
    std::map<std::string, std::pair<G, std::vector<double>>> before;
    for (const auto& e : model->params().entries()) {
      before[e.name] = {e.group, {e.tensor.data().begin(), e.tensor.data().end()}};
    }
    for (const auto& [s, groups] : table) {
      if (s == S::Scratch) continue;
      auto res = run_transfer(ckpt, data, TransferScenario::Eeg, s, tc);
      chk.expect(res.report.steps == (s == S::None ? 0u : 200u),
                 kind + " " + to_string(s) + " ran " + std::to_string(res.report.steps) +
                     " steps");
      auto after = instantiate(res.checkpoint);
      std::set<G> moved;
      for (const auto& e : after->params().entries()) {
        const auto& [group, values] = before.at(e.name);
        const bool same = std::equal(values.begin(), values.end(), e.tensor.data().begin(),
                                     e.tensor.data().end());
        if (groups.count(group)) {
          chk.expect(same, kind + " " + to_string(s) + " changed frozen " + e.name);
        } else if (!same) {
          moved.insert(group);
        }
      }
      for (auto g : kAllGroups) {
        if (!groups.count(g)) {
          chk.expect(moved.count(g) == 1,
                     kind + " " + to_string(s) + " left trainable " + std::string(to_string(g)) + " unchanged");
        }
      }
    }
    ++checked_models;
  }
  chk.note(std::to_string(checked_models) + " models x 5 strategies, 200 steps each");
}

// --- 5. transfer ordering ------------------------------------------------------------------------

void criterion_transfer(Check& chk) {
  constexpr int kSeeds = 5;
  const std::vector<double> levels{0, 1, 2, 3};
  double dt = 0.0, ft = 0.0, sc = 0.0;
  std::vector<double> ladder(levels.size(), 0.0);
  for (int s = 0; s < kSeeds; ++s) {
    auto src = default_domain_spec();
    src.name = "source";
    src.n_subjects = 20;
    src.epochs_per_subject = 60;
    src.seed = 100 + s;
    auto src_recs = generate_domain(src);

    ModelConfig mc = small_ssn(10, 8, {});
    mc.dropout = 0.0;
    mc.l2 = 0.0;
    auto ckpt_model = build_model(mc, s);
    auto pipe_ckpt = checkpoint_for(*ckpt_model, src_recs, {}, "source", 0, s);
    std::vector<PreparedRecording> prepared;
    for (const auto& r : src_recs) {
      prepared.push_back(prepare_recording(r, InputKind::Spectrogram, {}));
      normalize_in_place(prepared.back(), *pipe_ckpt.pipeline.normalization);
    }
    TrainConfig pre;
    pre.lr = 3e-3;
    pre.batch_size = 16;
    pre.max_passes = 100;
    pre.max_steps = 300;
    pre.seed = s;
    train(*ckpt_model, prepared, {}, pre);
    auto ckpt = capture_checkpoint(*ckpt_model, pipe_ckpt.pipeline, {"source", 300, static_cast<std::uint64_t>(s), ""});

    auto target = src;
    target.name = "target";
    target.n_subjects = 5;
    target.seed = 200 + s;
    auto specs = mismatch_ladder(target, levels, {1.5, -3.0, 0.05});
    for (std::size_t i = 0; i < specs.size(); ++i) {
      auto recs = generate_domain(specs[i]);
      TransferData data;
      data.train.assign(recs.begin(), recs.begin() + 2);
      data.test.assign(recs.begin() + 2, recs.end());
      TrainConfig tc = pre;
      tc.max_steps = 100;
      if (i == 2) {
        auto r_ft = run_transfer(ckpt, data, TransferScenario::Eeg, FinetuneStrategy::All, tc);
        auto r_sc = run_transfer(ckpt, data, TransferScenario::Eeg, FinetuneStrategy::Scratch, tc);
        dt += r_ft.report.metrics_before.accuracy / kSeeds;
        ft += r_ft.report.metrics_after.accuracy / kSeeds;
        sc += r_sc.report.metrics_after.accuracy / kSeeds;
        ladder[i] += r_ft.report.metrics_before.accuracy / kSeeds;
      } else {
        auto r = run_transfer(ckpt, data, TransferScenario::Eeg, FinetuneStrategy::None, tc);
        ladder[i] += r.report.metrics_before.accuracy / kSeeds;
      }
    }
  }
  chk.expect(ft - dt >= 0.03, "finetuned " + fmt(ft) + " vs direct transfer " + fmt(dt));
  chk.expect(ft - sc >= 0.03, "finetuned " + fmt(ft) + " vs scratch " + fmt(sc));
  std::string profile;
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    profile += (i ? "," : "") + fmt(ladder[i]);
    if (i > 0) {
      chk.expect(ladder[i] <= ladder[i - 1] + 0.02,
                 "ladder level " + std::to_string(i) + " rises to " + fmt(ladder[i]));
    }
  }
  chk.note("FT " + fmt(ft) + ", DT " + fmt(dt) + ", scratch " + fmt(sc) + "; ladder DT " + profile);
}

// --- 6. aggregation and ensemble bookkeeping ------------------------------------------------------

std::vector<std::vector<std::pair<std::size_t, std::size_t>>> enumerate_routing(std::size_t n,
                                                                                std::size_t L) {
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> r(n);
  for (std::size_t s = 0; s + L <= n; ++s) {
    for (std::size_t l = 0; l < L; ++l) r[s + l].emplace_back(s, l);
  }
  return r;
}

Posterior random_posterior(std::mt19937_64& rng) {
  std::gamma_distribution<double> g(0.7, 1.0);
  Posterior p;
  double sum = 0.0;
  for (auto& v : p) sum += v = g(rng) + 1e-9;
  for (auto& v : p) v /= sum;
  return p;
}

void criterion_aggregation(Check& chk) {
  for (auto [n, L] : {std::pair<std::size_t, std::size_t>{20, 20}, {25, 20}, {100, 20}}) {
    auto got = sequence_routing(n, L);
    auto want = enumerate_routing(n, L);
    for (auto& v : got) std::sort(v.begin(), v.end());
    chk.expect(got == want, "routing (" + std::to_string(n) + "," + std::to_string(L) + ")");
  }
  // The predictor's per-epoch ensembles follow the same profile.
  auto model = build_model(testing::toy_model_config(20), 3);
  auto rec = testing::toy_recording("s", 25, 1, kAllClasses);
  auto pred = predict_recording(*model, rec);
  auto want = enumerate_routing(25, 20);
  for (std::size_t e = 0; e < 25; ++e) {
    chk.expect(pred.epochs[e].contributions.size() == want[e].size(),
               "predictor ensemble size at epoch " + std::to_string(e));
  }

  std::mt19937_64 rng(2024);
  double worst_idem = 0.0;
  std::size_t ties = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 1 + rng() % 20;
    auto p = random_posterior(rng);
    if (trial % 2 == 0) {
      // Force an exact tie for the top class between two random indices.
      const std::size_t a = rng() % kNumStages, b = (a + 1 + rng() % 4) % kNumStages;
      const double top = *std::max_element(p.begin(), p.end());
      p[a] = p[b] = top;
      double sum = 0.0;
      for (double v : p) sum += v;
      for (auto& v : p) v /= sum;
      ++ties;
    }
    for (auto rule : {FusionRule::Multiplicative, FusionRule::Additive}) {
      std::vector<Posterior> copies(k, p);
      auto agg = aggregate(copies, rule);
      for (std::size_t c = 0; c < kNumStages; ++c) {
        worst_idem = std::max(worst_idem, std::abs(agg.posterior[c] - p[c]));
      }
      chk.expect(index_of(agg.label) == argmax_lowest(p),
                 "idempotent label, trial " + std::to_string(trial));
      chk.expect(index_of(agg.label) == argmax_lowest(agg.posterior),
                 "tie rule on fused posterior, trial " + std::to_string(trial));
    }
    // Lowest-index rule by direct scan.
    std::size_t lowest = 0;
    for (std::size_t c = 1; c < kNumStages; ++c) {
      if (p[c] > p[lowest]) lowest = c;
    }
    chk.expect(argmax_lowest(p) == lowest, "argmax tie rule, trial " + std::to_string(trial));
  }
  chk.expect(worst_idem <= 1e-12, "idempotence error " + fmt(worst_idem));
  chk.note("routing profiles exact; idempotence error " + fmt(worst_idem) + " over 1000 sets (" +
           std::to_string(ties) + " with forced ties)");
}

// --- 7. metrics oracle -----------------------------------------------------------------------------

struct OracleMetrics {
  double accuracy, macro_f1, kappa;
};

OracleMetrics brute_force(const std::vector<int>& t, const std::vector<int>& p) {
  const double n = static_cast<double>(t.size());
  double correct = 0;
  for (std::size_t i = 0; i < t.size(); ++i) correct += t[i] == p[i];
  double f1 = 0, pe = 0;
  for (int c = 0; c < 5; ++c) {
    double tp = 0, fp = 0, fn = 0, nt = 0, np = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      tp += t[i] == c && p[i] == c;
      fp += t[i] != c && p[i] == c;
      fn += t[i] == c && p[i] != c;
      nt += t[i] == c;
      np += p[i] == c;
    }
    const double prec = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    f1 += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0;
    pe += (nt / n) * (np / n);
  }
  const double po = correct / n;
  return {po, f1 / 5, pe >= 1 ? 1.0 : (po - pe) / (1 - pe)};
}

void criterion_metrics(Check& chk) {
  std::mt19937_64 rng(77);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 300;
    const int classes = 1 + static_cast<int>(rng() % 5);
    std::vector<int> ti(n), pi(n);
    std::vector<StageLabel> t(n), p(n);
    for (std::size_t i = 0; i < n; ++i) {
      ti[i] = static_cast<int>(rng() % classes);
      pi[i] = rng() % 3 == 0 ? ti[i] : static_cast<int>(rng() % classes);
      t[i] = kAllClasses[ti[i]];
      p[i] = kAllClasses[pi[i]];
    }
    auto r = compute_metrics(t, p);
    auto o = brute_force(ti, pi);
    worst = std::max({worst, std::abs(r.accuracy - o.accuracy), std::abs(r.macro_f1 - o.macro_f1),
                      std::abs(r.kappa - o.kappa)});
  }
  chk.expect(worst <= 1e-12, "max deviation from brute force " + fmt(worst));

  std::vector<StageLabel> truth;
  for (int i = 0; i < 6; ++i) truth.insert(truth.end(), kAllClasses.begin(), kAllClasses.end());
  chk.expect(compute_metrics(truth, truth).kappa == 1.0, "identical labelings kappa != 1");
  std::vector<StageLabel> constant(truth.size(), StageLabel::N2);
  const double k0 = compute_metrics(truth, constant).kappa;
  chk.expect(k0 == 0.0, "constant prediction kappa " + fmt(k0, 17));
  chk.note("max deviation " + fmt(worst) + " over 1000 pairs; kappa cases exact");
}

// --- 8. cross-validation protocol --------------------------------------------------------------

std::vector<std::string> subject_ids(std::size_t n) {
  std::vector<std::string> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back("s" + std::to_string(i));
  return s;
}

void criterion_crossval(Check& chk) {
  auto loo = leave_one_out(subject_ids(20), 4, 1);
  chk.expect(loo.size() == 20, "LOO fold count " + std::to_string(loo.size()));
  std::set<std::string> tested;
  for (const auto& f : loo) {
    chk.expect(f.test.size() == 1, "LOO test size");
    chk.expect(f.train.size() + f.validation.size() + f.test.size() == 20, "LOO fold covers 20");
    tested.insert(f.test.begin(), f.test.end());
  }
  chk.expect(tested.size() == 20, "LOO tests every subject once");
  check_folds(loo);

  auto kf = k_fold(subject_ids(22), 11, 2, 1);
  chk.expect(kf.size() == 11, "11-fold count");
  tested.clear();
  for (const auto& f : kf) {
    chk.expect(f.test.size() == 2, "11-fold test size " + std::to_string(f.test.size()));
    tested.insert(f.test.begin(), f.test.end());
  }
  chk.expect(tested.size() == 22, "11-fold tests every subject once");
  check_folds(kf);

  // Unequal fold sizes so that pooled and mean-of-folds accuracy differ.
  std::mt19937_64 rng(5);
  std::size_t correct = 0, total = 0;
  double mean_of_folds = 0.0;
  auto pipeline = [&](const Fold&, std::size_t i) {
    FoldOutcome o;
    const std::size_t n = 10 + 37 * i;
    std::size_t c = 0;
    for (std::size_t e = 0; e < n; ++e) {
      const auto t = kAllClasses[rng() % kNumStages];
      const auto p = rng() % 3 ? t : kAllClasses[rng() % kNumStages];
      o.truth.push_back(t);
      o.predicted.push_back(p);
      c += t == p;
    }
    correct += c;
    total += n;
    mean_of_folds += static_cast<double>(c) / static_cast<double>(n) / 11.0;
    return o;
  };
  auto res = cross_validate(kf, pipeline);
  const double pooled = static_cast<double>(correct) / static_cast<double>(total);
  chk.expect(res.pooled.accuracy == pooled,
             "pooled " + fmt(res.pooled.accuracy, 17) + " vs " + fmt(pooled, 17));
  chk.expect(res.pooled.n == total, "pooled epoch count");
  chk.note("LOO 20x1, 11-fold 11x2, pooled " + fmt(pooled, 6) + " (fold mean " +
           fmt(mean_of_folds, 6) + ")");
}

// --- 9. data plumbing ------------------------------------------------------------------------------

Channel index_channel(std::size_t n, double rate = 100.0, std::string name = "EEG") {
  Channel c;
  c.name = std::move(name);
  c.sample_rate_hz = rate;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = static_cast<double>(i);
  return c;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void criterion_plumbing(Check& chk) {
  nlohmann::json expected;
  {
    std::ifstream in(kData / "expected.json");
    expected = nlohmann::json::parse(in);
  }
  auto ramp = read_edf(kData / "ramp.edf");
  chk.expect(ramp.channels.size() == 1 && ramp.channels[0].name == "ramp" &&
                 ramp.channels[0].sample_rate_hz == 10.0,
             "ramp EDF header");
  chk.expect(max_abs_diff(ramp.channels[0].samples,
                          expected["ramp"]["samples"].get<std::vector<double>>()) <= 1e-12,
             "ramp EDF samples");

  auto m = map_stages({"3", "4", "W", "MOVEMENT", "R", "UNKNOWN"}, ScoringStandard::Rk);
  chk.expect(m.labels == std::vector<StageLabel>{StageLabel::N3, StageLabel::N3, StageLabel::W,
                                                 StageLabel::REM},
             "N4 merges into N3");
  chk.expect(m.excluded == std::vector<std::size_t>{3, 5}, "movement and unknown excluded");
  auto mv = map_recording(
      make_scored_recording("r", {index_channel(3 * 3000)}, {"W", "MOVEMENT", "2"}, 30.0),
      ScoringStandard::Rk);
  chk.expect(mv.n_epochs() == 2 && mv.channels[0].samples[3000] == 6000.0,
             "movement epoch cut from the signal");

  auto rec20 = make_scored_recording("r", {index_channel(140 * 100)},
                                     {"W", "1", "2", "3", "4", "R", "W"}, 20.0);
  auto x = expand_epochs_20_to_30(rec20);
  auto it = std::find(x.epoch_index.begin(), x.epoch_index.end(), 5u);
  bool expand_ok = x.epoch_len_s == 30.0 && it != x.epoch_index.end();
  if (expand_ok) {
    const std::size_t e = static_cast<std::size_t>(it - x.epoch_index.begin());
    expand_ok = x.labels[e] == "R" && x.channels[0].samples[e * 3000] == 9500.0 &&
                x.channels[0].samples[e * 3000 + 2999] == 12499.0;
  }
  chk.expect(expand_ok, "20 s epoch at 100 s expands to [95 s, 125 s)");

  auto ten = make_scored_recording("r", {index_channel(10 * 3000)},
                                   std::vector<std::string>(10, "W"), 30.0);
  ten.lights_off_epoch = 2;
  ten.lights_on_epoch = 8;
  auto trimmed = trim_to_in_bed(ten);
  chk.expect(trimmed.n_epochs() == 6 && trimmed.epoch_index.front() == 2 &&
                 trimmed.channels[0].samples.front() == 6000.0,
             "in-bed trimming");

  const auto& r = expected["resample"];
  const std::pair<const char*, ResampleRatio> cases[] = {
      {"200_to_100", {1, 2}}, {"256_to_100", {25, 64}}, {"50_to_100", {2, 1}}};
  double worst = 0.0;
  for (const auto& [key, ratio] : cases) {
    auto in = r[key]["input"].get<std::vector<double>>();
    worst = std::max(worst,
                     max_abs_diff(resample_poly(in, ratio), r[key]["output"].get<std::vector<double>>()));
  }
  chk.expect(worst <= 1e-9, "resampling deviates from reference by " + fmt(worst));
  chk.expect(resample_to_100hz(index_channel(6000, 200.0)).samples.size() == 3000,
             "200 Hz to 100 Hz length");

  const std::vector<std::string> rk{"W", "1", "2", "3", "4", "R", "MOVEMENT", "UNKNOWN"};
  const double rates[] = {100.0, 200.0, 50.0, 128.0, 256.0};
  std::mt19937_64 rng(99);
  std::size_t produced = 0, rejected = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double rate = rates[rng() % std::size(rates)];
    const double epoch_len = rng() % 2 ? 30.0 : 20.0;
    const std::size_t n_epochs = 3 + rng() % 8;
    const std::size_t extra =
        static_cast<std::size_t>(rng() % static_cast<std::size_t>(epoch_len * rate));
    const std::size_t n = static_cast<std::size_t>(n_epochs * epoch_len * rate) + extra;
    std::vector<Channel> channels{index_channel(n, rate, "EEG"), index_channel(n, rate, "EOG")};
    Hypnogram h;
    h.standard = ScoringStandard::Rk;
    h.epoch_len_s = epoch_len;
    for (std::size_t e = 0; e < n_epochs; ++e) h.tokens.push_back(rk[rng() % rk.size()]);
    if (rng() % 2) {
      h.lights_off_epoch = rng() % n_epochs;
      h.lights_on_epoch = *h.lights_off_epoch + rng() % (n_epochs - *h.lights_off_epoch + 1);
    }
    Recording rec;
    try {
      rec = canonicalize("r" + std::to_string(trial), channels, h, {});
    } catch (const DataError&) {
      chk.expect(epoch_len == 20.0, "unexpected canonicalization failure, trial " +
                                        std::to_string(trial));
      ++rejected;
      continue;
    }
    ++produced;
    bool ok = rec.labels.size() == rec.epoch_index.size();
    for (const auto& ch : rec.channels) {
      ok = ok && ch.sample_rate_hz == 100.0 &&
           ch.samples.size() == rec.n_epochs() * kSamplesPerEpoch;
    }
    try {
      check_canonical(rec);
    } catch (const Error&) {
      ok = false;
    }
    chk.expect(ok, "canonical length invariant, trial " + std::to_string(trial));
  }
  chk.note("resample max deviation " + fmt(worst) + "; " + std::to_string(produced) +
           " canonical recordings, " + std::to_string(rejected) + " too short to expand");
}

// --- 10. reproducibility ------------------------------------------------------------------------

struct RunArtifacts {
  std::string pretrain_digest;
  std::string pretrain_dir_hash;
  std::string transfer_digest;
  std::string report;
  std::string predictions;
};

RunArtifacts run_pipeline(const fs::path& dir) {
  auto src = default_domain_spec();
  src.n_subjects = 4;
  src.epochs_per_subject = 15;
  src.seed = 8;
  auto recs = generate_domain(src);
  const auto stft = coarse_stft();
  auto model = build_model(small_ssn(3, 6, stft), 8);
  auto seed_ckpt = checkpoint_for(*model, recs, stft, "source", 0, 8);
  std::vector<PreparedRecording> prepared;
  for (const auto& r : recs) {
    prepared.push_back(prepare_recording(r, InputKind::Spectrogram, stft));
    normalize_in_place(prepared.back(), *seed_ckpt.pipeline.normalization);
  }
  TrainConfig tc;
  tc.lr = 2e-3;
  tc.batch_size = 4;
  tc.max_passes = 1000;
  tc.max_steps = 30;
  tc.eval_every = 10;
  tc.seed = 8;
  std::vector<PreparedRecording> train_set(prepared.begin(), prepared.begin() + 3);
  std::vector<PreparedRecording> val_set(prepared.begin() + 3, prepared.end());
  train(*model, train_set, val_set, tc);
  auto ckpt = capture_checkpoint(*model, seed_ckpt.pipeline, {"source", 30, 8, ""});
  save_checkpoint(ckpt, dir / "pre");

  auto tgt = mismatch_ladder(src, {2})[0];
  tgt.seed = 9;
  auto trecs = generate_domain(tgt);
  TransferData data;
  data.train.assign(trecs.begin(), trecs.begin() + 2);
  data.validation.assign(trecs.begin() + 2, trecs.begin() + 3);
  data.test.assign(trecs.begin() + 3, trecs.end());
  auto res = run_transfer(load_checkpoint(dir / "pre"), data, TransferScenario::Eeg,
                          FinetuneStrategy::All, tc);
  write_predictions_csv(res.predictions, dir / "predictions.csv");
  std::ifstream in(dir / "predictions.csv");
  std::stringstream csv;
  csv << in.rdbuf();
  return {checkpoint_digest(ckpt), checkpoint_hash(dir / "pre"),
          checkpoint_digest(res.checkpoint), to_json(res.report).dump(), csv.str()};
}

void criterion_reproducibility(Check& chk) {
  const auto root = fs::temp_directory_path() / ("sleeptl_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(root);
  auto a = run_pipeline(root / "a");
  auto b = run_pipeline(root / "b");
  fs::remove_all(root);
  chk.expect(a.pretrain_digest == b.pretrain_digest, "pretrained checkpoint digest differs");
  chk.expect(a.pretrain_dir_hash == b.pretrain_dir_hash, "saved checkpoint files differ");
  chk.expect(a.transfer_digest == b.transfer_digest, "finetuned checkpoint digest differs");
  chk.expect(a.report == b.report, "transfer report differs");
  chk.expect(a.predictions == b.predictions, "predictions differ");
  chk.note("checkpoint " + a.transfer_digest.substr(0, 16) + " reproduced");
}

// --- driver -------------------------------------------------------------------------------------

struct Criterion {
  int id;
  const char* name;
  std::function<void(Check&)> run;
};

}  // namespace
}  // namespace sleeptl

int main(int argc, char** argv) {
  using namespace sleeptl;
  const std::vector<Criterion> all{
      {1, "gradient correctness", criterion_gradients},
      {2, "loss formula", criterion_loss},
      {3, "overfit sanity", criterion_overfit},
      {4, "freezing exactness", criterion_freezing},
      {5, "transfer ordering", criterion_transfer},
      {6, "aggregation and ensemble bookkeeping", criterion_aggregation},
      {7, "metrics oracle", criterion_metrics},
      {8, "cross-validation protocol", criterion_crossval},
      {9, "data plumbing", criterion_plumbing},
      {10, "reproducibility", criterion_reproducibility},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : all) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Check chk;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(chk);
    } catch (const std::exception& e) {
      chk.expect(false, std::string("exception: ") + e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %s  %s (%.1f s)  %s\n", c.id, chk.passed() ? "PASS" : "FAIL",
                c.name, secs, chk.summary().c_str());
    const auto& f = chk.failures();
    for (std::size_t i = 0; i < std::min<std::size_t>(f.size(), 10); ++i) {
      std::printf("    %s\n", f[i].c_str());
    }
    if (f.size() > 10) std::printf("    ... %zu more\n", f.size() - 10);
    std::fflush(stdout);
    failed += !chk.passed();
  }
  return failed == 0 ? 0 : 1;
}
