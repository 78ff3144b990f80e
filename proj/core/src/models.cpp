// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/models.hpp"

#include <random>

#include "json_fields.hpp"
#include "sleeptl/error.hpp"
#include "sleeptl/hash.hpp"

namespace sleeptl {

using ad::Tensor;
using layers::ForwardContext;
using json = nlohmann::json;

std::string to_string(ModelKind k) {
  return k == ModelKind::SeqSleepNetPlus ? "seqsleepnet+" : "deepsleepnet+";
}

ModelKind parse_model_kind(const std::string& name) {
  if (name == "seqsleepnet+" || name == "SeqSleepNetPlus") return ModelKind::SeqSleepNetPlus;
  if (name == "deepsleepnet+" || name == "DeepSleepNetPlus") return ModelKind::DeepSleepNetPlus;
  throw ConfigError("model.kind: unknown model '" + name + "'");
}

InputKind input_kind(ModelKind k) {
  return k == ModelKind::SeqSleepNetPlus ? InputKind::Spectrogram : InputKind::Raw;
}

bool ModelConfig::residual_enabled() const {
  return residual.value_or(kind == ModelKind::DeepSleepNetPlus);
}

std::string to_string(InputKind k) { return k == InputKind::Raw ? "raw" : "spectrogram"; }

InputKind parse_input_kind(const std::string& name) {
  if (name == "raw") return InputKind::Raw;
  if (name == "spectrogram") return InputKind::Spectrogram;
  throw ParseError("kind", "unknown input kind '" + name + "'");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
  };
  positive(seq_len, "seq_len");
  positive(n_channels, "n_channels");
  if (n_classes != 5) throw ConfigError("model.n_classes must be 5");
  if (l2 < 0) throw ConfigError("model.l2 must be non-negative");
  if (dropout < 0 || dropout >= 1) throw ConfigError("model.dropout must be in [0, 1)");
  if (kind == ModelKind::SeqSleepNetPlus) {
    if (residual_enabled()) {
      throw ConfigError("model.residual: SeqSleepNet+ has no residual connection");
    }
    const auto& s = seqsleepnet;
    positive(s.n_frames, "seqsleepnet.n_frames");
    positive(s.n_bins, "seqsleepnet.n_bins");
    positive(s.n_filters, "seqsleepnet.n_filters");
    positive(s.epb_hidden, "seqsleepnet.epb_hidden");
    positive(s.attention_size, "seqsleepnet.attention_size");
    positive(s.spb_hidden, "seqsleepnet.spb_hidden");
  } else {
    if (!residual_enabled()) {
      throw ConfigError("model.residual: DeepSleepNet+ requires its residual connection");
    }
    const auto& d = deepsleepnet;
    positive(d.n_samples, "deepsleepnet.n_samples");
    positive(d.spb_hidden, "deepsleepnet.spb_hidden");
    positive(d.spb_layers, "deepsleepnet.spb_layers");
    positive(d.spb_output, "deepsleepnet.spb_output");
    for (const auto* b : {&d.fine, &d.coarse}) {
      positive(b->first_kernel, "deepsleepnet branch first_kernel");
      positive(b->first_stride, "deepsleepnet branch first_stride");
      positive(b->first_filters, "deepsleepnet branch first_filters");
      positive(b->pool1_size, "deepsleepnet branch pool1_size");
      positive(b->pool1_stride, "deepsleepnet branch pool1_stride");
      positive(b->pool2_size, "deepsleepnet branch pool2_size");
      positive(b->pool2_stride, "deepsleepnet branch pool2_stride");
      if (b->n_convs > 0) {
        positive(b->kernel, "deepsleepnet branch kernel");
        positive(b->filters, "deepsleepnet branch filters");
      }
    }
  }
}

namespace {

json branch_to_json(const layers::ConvBranchConfig& b) {
  return {{"first_kernel", b.first_kernel}, {"first_stride", b.first_stride},
          {"first_filters", b.first_filters}, {"pool1_size", b.pool1_size},
          {"pool1_stride", b.pool1_stride}, {"n_convs", b.n_convs},
          {"kernel", b.kernel}, {"filters", b.filters},
          {"pool2_size", b.pool2_size}, {"pool2_stride", b.pool2_stride}};
}

using detail::check_keys;
using detail::read_opt;

layers::ConvBranchConfig branch_from_json(const json& j, layers::ConvBranchConfig b,
                                          const std::string& where) {
  check_keys(j, {"first_kernel", "first_stride", "first_filters", "pool1_size", "pool1_stride",
                 "n_convs", "kernel", "filters", "pool2_size", "pool2_stride"},
             where);
  read_opt(j, "first_kernel", b.first_kernel, where);
  read_opt(j, "first_stride", b.first_stride, where);
  read_opt(j, "first_filters", b.first_filters, where);
  read_opt(j, "pool1_size", b.pool1_size, where);
  read_opt(j, "pool1_stride", b.pool1_stride, where);
  read_opt(j, "n_convs", b.n_convs, where);
  read_opt(j, "kernel", b.kernel, where);
  read_opt(j, "filters", b.filters, where);
  read_opt(j, "pool2_size", b.pool2_size, where);
  read_opt(j, "pool2_stride", b.pool2_stride, where);
  return b;
}

}  // namespace

json to_json(const ModelConfig& c) {
  const auto& s = c.seqsleepnet;
  const auto& d = c.deepsleepnet;
  json j = {{"kind", to_string(c.kind)},
            {"seq_len", c.seq_len},
            {"n_channels", c.n_channels},
            {"n_classes", c.n_classes},
            {"residual", c.residual_enabled()},
            {"l2", c.l2},
            {"dropout", c.dropout}};
  if (c.kind == ModelKind::SeqSleepNetPlus) {
    j["seqsleepnet"] = {{"n_frames", s.n_frames},         {"n_bins", s.n_bins},
                        {"n_filters", s.n_filters},       {"epb_hidden", s.epb_hidden},
                        {"attention_size", s.attention_size}, {"spb_hidden", s.spb_hidden},
                        {"spb_output", s.spb_output},     {"recurrent_bn", s.recurrent_bn}};
  } else {
    j["deepsleepnet"] = {{"n_samples", d.n_samples},
                         {"fine", branch_to_json(d.fine)},
                         {"coarse", branch_to_json(d.coarse)},
                         {"spb_hidden", d.spb_hidden},
                         {"spb_layers", d.spb_layers},
                         {"spb_output", d.spb_output}};
  }
  return j;
}

ModelConfig model_config_from_json(const json& j) {
  const std::string w = "model";
  check_keys(j, {"kind", "seq_len", "n_channels", "n_classes", "residual", "l2", "dropout",
                 "seqsleepnet", "deepsleepnet"},
             w);
  ModelConfig c;
  if (!j.contains("kind")) throw ConfigError("model.kind: missing");
  std::string kind;
  read_opt(j, "kind", kind, w);
  c.kind = parse_model_kind(kind);
  read_opt(j, "seq_len", c.seq_len, w);
  read_opt(j, "n_channels", c.n_channels, w);
  read_opt(j, "n_classes", c.n_classes, w);
  if (j.contains("residual")) {
    bool r = false;
    read_opt(j, "residual", r, w);
    c.residual = r;
  }
  read_opt(j, "l2", c.l2, w);
  read_opt(j, "dropout", c.dropout, w);
  if (j.contains("seqsleepnet")) {
    const auto& s = j.at("seqsleepnet");
    const std::string ws = w + ".seqsleepnet";
    check_keys(s, {"n_frames", "n_bins", "n_filters", "epb_hidden", "attention_size", "spb_hidden",
                   "spb_output", "recurrent_bn"},
               ws);
    auto& o = c.seqsleepnet;
    read_opt(s, "n_frames", o.n_frames, ws);
    read_opt(s, "n_bins", o.n_bins, ws);
    read_opt(s, "n_filters", o.n_filters, ws);
    read_opt(s, "epb_hidden", o.epb_hidden, ws);
    read_opt(s, "attention_size", o.attention_size, ws);
    read_opt(s, "spb_hidden", o.spb_hidden, ws);
    read_opt(s, "spb_output", o.spb_output, ws);
    read_opt(s, "recurrent_bn", o.recurrent_bn, ws);
  }
  if (j.contains("deepsleepnet")) {
    const auto& d = j.at("deepsleepnet");
    const std::string wd = w + ".deepsleepnet";
    check_keys(d, {"n_samples", "fine", "coarse", "spb_hidden", "spb_layers", "spb_output"}, wd);
    auto& o = c.deepsleepnet;
    read_opt(d, "n_samples", o.n_samples, wd);
    if (d.contains("fine")) o.fine = branch_from_json(d.at("fine"), o.fine, wd + ".fine");
    if (d.contains("coarse")) o.coarse = branch_from_json(d.at("coarse"), o.coarse, wd + ".coarse");
    read_opt(d, "spb_hidden", o.spb_hidden, wd);
    read_opt(d, "spb_layers", o.spb_layers, wd);
    read_opt(d, "spb_output", o.spb_output, wd);
  }
  c.validate();
  return c;
}

std::string config_hash(const ModelConfig& c) { return sha256_hex(to_json(c).dump()); }

// ---------------------------------------------------------------------------

Tensor SequenceModel::forward(const ModelInput& in, const ForwardContext& ctx) const {
  if (in.seq_len != config_.seq_len) {
    throw ShapeError("model expects sequences of " + std::to_string(config_.seq_len) +
                     " epochs, got " + std::to_string(in.seq_len));
  }
  Tensor x = epoch_features(in, ctx);
  Tensor o = sequence_outputs(x, in.batch, in.seq_len, ctx);
  return head_.forward(o);
}

Tensor SequenceModel::maybe_dropout(const Tensor& x, const ForwardContext& ctx) const {
  if (!ctx.train || config_.dropout == 0.0) return x;
  if (!ctx.rng) throw ConfigError("training forward pass needs a random generator for dropout");
  return ad::dropout(x, config_.dropout, true, *ctx.rng);
}

namespace {

class SeqSleepNetPlus final : public SequenceModel {
 public:
  SeqSleepNetPlus(const ModelConfig& config, std::mt19937_64& rng) : SequenceModel(config) {
    const auto& s = config_.seqsleepnet;
    const std::size_t c = config_.n_channels;
    for (std::size_t i = 0; i < c; ++i) {
      filterbanks_.emplace_back(store_, "epb.filterbank" + std::to_string(i), ParamGroup::EPB,
                                s.n_bins, s.n_filters, rng);
    }
    epb_rnn_ = layers::BiRnn(store_, "epb.birnn", ParamGroup::EPB, layers::RnnKind::GRU,
                             s.n_filters * c, s.epb_hidden, s.recurrent_bn, rng);
    attention_ = layers::Attention(store_, "epb.attention", ParamGroup::EPB, 2 * s.epb_hidden,
                                   s.attention_size, rng);
    spb_rnn_ = layers::BiRnn(store_, "spb.birnn", ParamGroup::SPB, layers::RnnKind::GRU,
                             2 * s.epb_hidden, s.spb_hidden, s.recurrent_bn, rng);
    const std::size_t out = s.spb_output ? s.spb_output : 2 * s.spb_hidden;
    w_ho_ = layers::Linear(store_, "spb.w_ho", ParamGroup::SPB, 2 * s.spb_hidden, out, rng);
    head_ = layers::SoftmaxHead(store_, "softmax", out, config_.n_classes, rng);
  }

  Tensor epoch_features(const ModelInput& in, const ForwardContext& ctx) const override {
    const auto& s = config_.seqsleepnet;
    const std::size_t c = config_.n_channels, e = in.n_epochs(), rows = s.n_frames * e;
    if (in.x.rank() != 3 || in.x.dim(0) != c || in.x.dim(1) != rows || in.x.dim(2) != s.n_bins) {
      throw ShapeError("SeqSleepNet+ expects input [" + std::to_string(c) + ", " +
                       std::to_string(rows) + ", " + std::to_string(s.n_bins) + "], got " +
                       ad::shape_str(in.x.shape()));
    }
    std::vector<Tensor> per_channel;
    for (std::size_t i = 0; i < c; ++i) {
      Tensor xc = ad::reshape(ad::slice(in.x, 0, i, i + 1), {rows, s.n_bins});
      per_channel.push_back(filterbanks_[i].forward(xc));
    }
    Tensor fb = c == 1 ? per_channel.front() : ad::concat(per_channel, 1);
    auto states = epb_rnn_.forward(fb, s.n_frames, ctx);
    std::vector<Tensor> h;
    for (std::size_t t = 0; t < s.n_frames; ++t) {
      h.push_back(ad::concat({states.backward[t], states.forward[t]}, 1));
    }
    return maybe_dropout(attention_.forward(h), ctx);
  }

  Tensor sequence_outputs(const Tensor& x, std::size_t batch, std::size_t seq_len,
                          const ForwardContext& ctx) const override {
    auto states = spb_rnn_.forward(x, seq_len, ctx);
    (void)batch;
    return maybe_dropout(layers::birnn_output(states, w_ho_), ctx);
  }

 private:
  std::vector<layers::Filterbank> filterbanks_;
  layers::BiRnn epb_rnn_;
  layers::Attention attention_;
  layers::BiRnn spb_rnn_;
  layers::Linear w_ho_;
};

class DeepSleepNetPlus final : public SequenceModel {
 public:
  DeepSleepNetPlus(const ModelConfig& config, std::mt19937_64& rng) : SequenceModel(config) {
    const auto& d = config_.deepsleepnet;
    cnn_ = layers::CnnBranchPair(store_, "epb.cnn", ParamGroup::EPB, config_.n_channels,
                                 d.n_samples, d.fine, d.coarse, rng);
    std::size_t in = cnn_.output_size();
    for (std::size_t k = 0; k < d.spb_layers; ++k) {
      spb_rnn_.emplace_back(store_, "spb.bilstm" + std::to_string(k), ParamGroup::SPB,
                            layers::RnnKind::LSTM, in, d.spb_hidden, false, rng);
      in = 2 * d.spb_hidden;
    }
    w_ho_ = layers::Linear(store_, "spb.w_ho", ParamGroup::SPB, in, d.spb_output, rng);
    residual_ = layers::Linear(store_, "spb.residual", ParamGroup::SPB, cnn_.output_size(),
                               d.spb_output, rng);
    head_ = layers::SoftmaxHead(store_, "softmax", d.spb_output, config_.n_classes, rng);
  }

  Tensor epoch_features(const ModelInput& in, const ForwardContext& ctx) const override {
    const auto& d = config_.deepsleepnet;
    const std::size_t e = in.n_epochs();
    if (in.x.rank() != 3 || in.x.dim(0) != e || in.x.dim(1) != config_.n_channels ||
        in.x.dim(2) != d.n_samples) {
      throw ShapeError("DeepSleepNet+ expects input [" + std::to_string(e) + ", " +
                       std::to_string(config_.n_channels) + ", " + std::to_string(d.n_samples) +
                       "], got " + ad::shape_str(in.x.shape()));
    }
    return maybe_dropout(cnn_.forward(in.x, ctx), ctx);
  }

  Tensor sequence_outputs(const Tensor& x, std::size_t batch, std::size_t seq_len,
                          const ForwardContext& ctx) const override {
    (void)batch;
    Tensor h = x;
    layers::BiRnnStates states;
    for (std::size_t k = 0; k < spb_rnn_.size(); ++k) {
      states = spb_rnn_[k].forward(h, seq_len, ctx);
      if (k + 1 < spb_rnn_.size()) h = layers::birnn_concat(states);
    }
    Tensor o = layers::birnn_output(states, w_ho_);
    return maybe_dropout(layers::residual_combine(x, o, residual_), ctx);
  }

 private:
  layers::CnnBranchPair cnn_;
  std::vector<layers::BiRnn> spb_rnn_;
  layers::Linear w_ho_;
  layers::Linear residual_;
};

}  // namespace

std::unique_ptr<SequenceModel> build_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  if (config.kind == ModelKind::SeqSleepNetPlus) {
    return std::make_unique<SeqSleepNetPlus>(config, rng);
  }
  return std::make_unique<DeepSleepNetPlus>(config, rng);
}

Tensor sequence_loss(const Tensor& probs, const Tensor& targets, std::size_t seq_len,
                     const ParameterStore* theta, double lambda, bool mean_over_batch) {
  if (probs.shape() != targets.shape() || probs.rank() != 2) {
    throw ShapeError("sequence_loss: predictions " + ad::shape_str(probs.shape()) +
                     " and targets " + ad::shape_str(targets.shape()) + " differ");
  }
  if (seq_len == 0 || probs.dim(0) % seq_len != 0) {
    throw ShapeError("sequence_loss: " + std::to_string(probs.dim(0)) +
                     " rows are not a whole number of sequences of length " +
                     std::to_string(seq_len));
  }
  const double batch = static_cast<double>(probs.dim(0) / seq_len);
  double norm = static_cast<double>(seq_len);
  if (mean_over_batch) norm *= batch;
  Tensor ce = ad::scale(ad::sum(targets * ad::log(probs, kProbFloor)), -1.0 / norm);
  if (lambda == 0.0) return ce;
  if (!theta) throw ConfigError("sequence_loss: regularization needs the parameter store");
  return ce + ad::scale(theta->l2_term(), lambda / 2.0);
}

}  // namespace sleeptl
