// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/layers.hpp"

#include "sleeptl/error.hpp"

namespace sleeptl::layers {

Tensor stack_steps(const std::vector<Tensor>& steps) {
  if (steps.size() == 1) return steps.front();
  return ad::concat(steps, 0);
}

std::vector<Tensor> split_steps(const Tensor& x, std::size_t steps) {
  if (steps == 0 || x.dim(0) % steps != 0) {
    throw ShapeError("cannot split " + ad::shape_str(x.shape()) + " into " +
                     std::to_string(steps) + " steps");
  }
  const std::size_t n = x.dim(0) / steps;
  std::vector<Tensor> out;
  out.reserve(steps);
  for (std::size_t t = 0; t < steps; ++t) out.push_back(ad::slice(x, 0, t * n, (t + 1) * n));
  return out;
}

// ---------------------------------------------------------------------------

Linear::Linear(ParameterStore& store, const std::string& prefix, ParamGroup group, std::size_t in,
               std::size_t out, std::mt19937_64& rng)
    : in_(in), out_(out) {
  w_ = store.add_param(prefix + ".w", group, {in, out}, glorot_uniform(in, out, in * out, rng));
  b_ = store.add_param(prefix + ".b", group, {out}, std::vector<double>(out, 0.0));
}

Tensor Linear::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != in_) {
    throw ShapeError("linear layer expects [N, " + std::to_string(in_) + "], got " +
                     ad::shape_str(x.shape()));
  }
  return ad::add_bias(ad::matmul(x, w_), b_);
}

// ---------------------------------------------------------------------------

BatchNorm::BatchNorm(ParameterStore& store, const std::string& prefix, ParamGroup group,
                     std::size_t features, double gamma_init)
    : group_(group) {
  gamma_ = store.add_param(prefix + ".gamma", group, {features},
                           std::vector<double>(features, gamma_init));
  beta_ = store.add_param(prefix + ".beta", group, {features}, std::vector<double>(features, 0.0));
  mean_ = store.add_buffer(prefix + ".running_mean", group, {features}, 0.0);
  var_ = store.add_buffer(prefix + ".running_var", group, {features}, 1.0);
}

Tensor BatchNorm::forward(const Tensor& x, const ForwardContext& ctx, std::size_t axis) const {
  ad::BatchNormOptions opts;
  opts.axis = axis;
  opts.train = ctx.train;
  opts.update_running = ctx.update_running(group_);
  Tensor mean = mean_, var = var_;
  return ad::batchnorm(x, gamma_, beta_, mean, var, opts);
}

Tensor BatchNorm::shift_only(std::size_t rows) const {
  return ad::add_bias(Tensor::zeros({rows, beta_.numel()}), beta_);
}

// ---------------------------------------------------------------------------

Filterbank::Filterbank(ParameterStore& store, const std::string& prefix, ParamGroup group,
                       std::size_t n_bins, std::size_t n_filters, std::mt19937_64& rng)
    : n_bins_(n_bins), n_filters_(n_filters) {
  w_ = store.add_param(prefix + ".w", group, {n_bins, n_filters},
                       glorot_uniform(n_bins, n_filters, n_bins * n_filters, rng));
}

Tensor Filterbank::effective_weight() const { return ad::sigmoid(w_); }

Tensor Filterbank::forward(const Tensor& x) const {
  if (x.rank() != 2 || x.dim(1) != n_bins_) {
    throw ShapeError("filterbank expects " + std::to_string(n_bins_) + " frequency bins, got " +
                     ad::shape_str(x.shape()));
  }
  return ad::matmul(x, effective_weight());
}

// ---------------------------------------------------------------------------

RnnCell::RnnCell(ParameterStore& store, const std::string& prefix, ParamGroup group, RnnKind kind,
                 std::size_t input_size, std::size_t hidden_size, bool recurrent_bn,
                 std::mt19937_64& rng)
    : kind_(kind), group_(group), input_size_(input_size), hidden_(hidden_size),
      recurrent_bn_(recurrent_bn) {
  const std::size_t h = hidden_size;
  if (kind == RnnKind::GRU) {
    wx_ = store.add_param(prefix + ".wx", group, {input_size, 3 * h},
                          glorot_uniform(input_size, 3 * h, input_size * 3 * h, rng));
    u_zr_ = store.add_param(prefix + ".u_zr", group, {h, 2 * h},
                            glorot_uniform(h, 2 * h, h * 2 * h, rng));
    u_n_ = store.add_param(prefix + ".u_n", group, {h, h}, glorot_uniform(h, h, h * h, rng));
    b_ = store.add_param(prefix + ".b", group, {3 * h}, std::vector<double>(3 * h, 0.0));
    if (recurrent_bn) {
      bn_x_ = BatchNorm(store, prefix + ".bn_x", group, 3 * h);
      bn_zr_ = BatchNorm(store, prefix + ".bn_zr", group, 2 * h);
      bn_n_ = BatchNorm(store, prefix + ".bn_n", group, h);
    }
  } else {
    if (recurrent_bn) throw ConfigError("recurrent batch normalization is only available for GRU");
    wx_ = store.add_param(prefix + ".wx", group, {input_size, 4 * h},
                          glorot_uniform(input_size, 4 * h, input_size * 4 * h, rng));
    u_ = store.add_param(prefix + ".u", group, {h, 4 * h}, glorot_uniform(h, 4 * h, h * 4 * h, rng));
    std::vector<double> b(4 * h, 0.0);
    for (std::size_t i = h; i < 2 * h; ++i) b[i] = 1.0;  // forget gate
    b_ = store.add_param(prefix + ".b", group, {4 * h}, std::move(b));
  }
}

Tensor RnnCell::gru_step(const Tensor& xw, const Tensor& h, bool first,
                         const ForwardContext& ctx) const {
  const std::size_t n = xw.dim(0), hs = hidden_;
  Tensor zr_pre = ad::add_bias(ad::slice(xw, 1, 0, 2 * hs), ad::slice(b_, 0, 0, 2 * hs));
  // The initial state is exactly zero, so its recurrent terms reduce to the
  // normalizer shift and contribute nothing to the running statistics.
  if (first) {
    if (recurrent_bn_) zr_pre = zr_pre + bn_zr_.shift_only(n);
  } else {
    Tensor hu = ad::matmul(h, u_zr_);
    zr_pre = zr_pre + (recurrent_bn_ ? bn_zr_.forward(hu, ctx) : hu);
  }
  Tensor zr = ad::sigmoid(zr_pre);
  Tensor z = ad::slice(zr, 1, 0, hs);
  Tensor r = ad::slice(zr, 1, hs, 2 * hs);

  Tensor n_pre = ad::add_bias(ad::slice(xw, 1, 2 * hs, 3 * hs), ad::slice(b_, 0, 2 * hs, 3 * hs));
  if (first) {
    if (recurrent_bn_) n_pre = n_pre + bn_n_.shift_only(n);
  } else {
    Tensor hu = ad::matmul(r * h, u_n_);
    n_pre = n_pre + (recurrent_bn_ ? bn_n_.forward(hu, ctx) : hu);
  }
  Tensor cand = ad::tanh(n_pre);
  // h' = (1 - z) * n + z * h
  return cand + z * (h - cand);
}

std::vector<Tensor> RnnCell::run(const Tensor& x, std::size_t steps, bool reverse,
                                 const ForwardContext& ctx) const {
  if (steps == 0) throw DataError("recurrent layer received an empty sequence");
  if (x.rank() != 2 || x.dim(1) != input_size_ || x.dim(0) % steps != 0) {
    throw ShapeError("recurrent layer expects [" + std::to_string(steps) + " * N, " +
                     std::to_string(input_size_) + "], got " + ad::shape_str(x.shape()));
  }
  const std::size_t n = x.dim(0) / steps;
  const std::size_t hs = hidden_;
  Tensor xw_all = ad::matmul(x, wx_);
  std::vector<Tensor> out(steps);
  Tensor h = Tensor::zeros({n, hs});
  Tensor c = Tensor::zeros({n, hs});
  for (std::size_t i = 0; i < steps; ++i) {
    const std::size_t t = reverse ? steps - 1 - i : i;
    Tensor xw = ad::slice(xw_all, 0, t * n, (t + 1) * n);
    const bool first = i == 0;
    if (kind_ == RnnKind::GRU) {
      if (recurrent_bn_) xw = bn_x_.forward(xw, ctx);
      h = gru_step(xw, h, first, ctx);
    } else {
      Tensor pre = ad::add_bias(xw, b_);
      if (!first) pre = pre + ad::matmul(h, u_);
      Tensor ifo_i = ad::sigmoid(ad::slice(pre, 1, 0, 2 * hs));
      Tensor gate_i = ad::slice(ifo_i, 1, 0, hs);
      Tensor gate_f = ad::slice(ifo_i, 1, hs, 2 * hs);
      Tensor g = ad::tanh(ad::slice(pre, 1, 2 * hs, 3 * hs));
      Tensor gate_o = ad::sigmoid(ad::slice(pre, 1, 3 * hs, 4 * hs));
      c = first ? gate_i * g : gate_f * c + gate_i * g;
      h = gate_o * ad::tanh(c);
    }
    out[t] = h;
  }
  return out;
}

// ---------------------------------------------------------------------------

BiRnn::BiRnn(ParameterStore& store, const std::string& prefix, ParamGroup group, RnnKind kind,
             std::size_t input_size, std::size_t hidden_size, bool recurrent_bn,
             std::mt19937_64& rng)
    : fwd_(store, prefix + ".fw", group, kind, input_size, hidden_size, recurrent_bn, rng),
      bwd_(store, prefix + ".bw", group, kind, input_size, hidden_size, recurrent_bn, rng) {}

BiRnnStates BiRnn::forward(const Tensor& x, std::size_t steps, const ForwardContext& ctx) const {
  return birnn_forward(x, steps, fwd_, bwd_, ctx);
}

BiRnnStates birnn_forward(const Tensor& x, std::size_t steps, const RnnCell& fwd,
                          const RnnCell& bwd, const ForwardContext& ctx) {
  BiRnnStates s;
  s.forward = fwd.run(x, steps, false, ctx);
  s.backward = bwd.run(x, steps, true, ctx);
  return s;
}

Tensor birnn_concat(const BiRnnStates& states) {
  if (states.forward.size() != states.backward.size() || states.forward.empty()) {
    throw ShapeError("bidirectional states have mismatched lengths");
  }
  std::vector<Tensor> steps;
  steps.reserve(states.forward.size());
  for (std::size_t t = 0; t < states.forward.size(); ++t) {
    steps.push_back(ad::concat({states.backward[t], states.forward[t]}, 1));
  }
  return stack_steps(steps);
}

Tensor birnn_output(const BiRnnStates& states, const Linear& w_ho) {
  return w_ho.forward(birnn_concat(states));
}

// ---------------------------------------------------------------------------

Attention::Attention(ParameterStore& store, const std::string& prefix, ParamGroup group,
                     std::size_t input_size, std::size_t attention_size, std::mt19937_64& rng) {
  wa_ = store.add_param(prefix + ".wa", group, {input_size, attention_size},
                        glorot_uniform(input_size, attention_size, input_size * attention_size, rng));
  ba_ = store.add_param(prefix + ".ba", group, {attention_size},
                        std::vector<double>(attention_size, 0.0));
  u_ = store.add_param(prefix + ".u", group, {attention_size, 1},
                       glorot_uniform(attention_size, 1, attention_size, rng));
}

Tensor Attention::weights(const std::vector<Tensor>& states) const {
  if (states.empty()) throw DataError("attention over an empty sequence");
  const std::size_t steps = states.size(), n = states.front().dim(0);
  Tensor e = ad::tanh(ad::add_bias(ad::matmul(stack_steps(states), wa_), ba_));
  Tensor scores = ad::reshape(ad::matmul(e, u_), {steps, n});
  return ad::softmax(ad::transpose(scores));
}

Tensor Attention::forward(const std::vector<Tensor>& states) const {
  Tensor a = weights(states);
  Tensor out = ad::mul_col(states[0], ad::slice(a, 1, 0, 1));
  for (std::size_t t = 1; t < states.size(); ++t) {
    out = out + ad::mul_col(states[t], ad::slice(a, 1, t, t + 1));
  }
  return out;
}

// ---------------------------------------------------------------------------

std::size_t conv_branch_output_size(const ConvBranchConfig& cfg, std::size_t n_samples) {
  using ad::conv_output_length;
  using ad::Padding;
  std::size_t len = conv_output_length(n_samples, cfg.first_kernel, cfg.first_stride, Padding::Same);
  len = conv_output_length(len, cfg.pool1_size, cfg.pool1_stride, Padding::Same);
  len = conv_output_length(len, cfg.pool2_size, cfg.pool2_stride, Padding::Same);
  const std::size_t channels = cfg.n_convs > 0 ? cfg.filters : cfg.first_filters;
  return len * channels;
}

ConvBranch::ConvBranch(ParameterStore& store, const std::string& prefix, ParamGroup group,
                       std::size_t in_channels, std::size_t n_samples,
                       const ConvBranchConfig& cfg, std::mt19937_64& rng)
    : cfg_(cfg), in_channels_(in_channels), n_samples_(n_samples) {
  if (n_samples < cfg.first_kernel) {
    throw ConfigError("epoch of " + std::to_string(n_samples) +
                      " samples is shorter than the first convolution kernel (" +
                      std::to_string(cfg.first_kernel) + ")");
  }
  auto add_conv = [&](const std::string& name, std::size_t out, std::size_t in, std::size_t k) {
    kernels_.push_back(store.add_param(name, group, {out, in, k},
                                       glorot_uniform(in * k, out * k, out * in * k, rng)));
  };
  add_conv(prefix + ".conv0.w", cfg.first_filters, in_channels, cfg.first_kernel);
  norms_.emplace_back(store, prefix + ".bn0", group, cfg.first_filters);
  std::size_t prev = cfg.first_filters;
  for (std::size_t i = 0; i < cfg.n_convs; ++i) {
    const std::string idx = std::to_string(i + 1);
    add_conv(prefix + ".conv" + idx + ".w", cfg.filters, prev, cfg.kernel);
    norms_.emplace_back(store, prefix + ".bn" + idx, group, cfg.filters);
    prev = cfg.filters;
  }
  out_len_ = conv_branch_output_size(cfg, n_samples) / prev;
}

std::size_t ConvBranch::output_size() const {
  return out_len_ * (cfg_.n_convs > 0 ? cfg_.filters : cfg_.first_filters);
}

Tensor ConvBranch::forward(const Tensor& x, const ForwardContext& ctx) const {
  if (x.rank() != 3 || x.dim(1) != in_channels_ || x.dim(2) != n_samples_) {
    throw ShapeError("conv branch expects [E, " + std::to_string(in_channels_) + ", " +
                     std::to_string(n_samples_) + "], got " + ad::shape_str(x.shape()));
  }
  Tensor h = ad::conv1d(x, kernels_[0], cfg_.first_stride);
  h = ad::relu(norms_[0].forward(h, ctx));
  h = ad::maxpool1d(h, cfg_.pool1_size, cfg_.pool1_stride);
  for (std::size_t i = 1; i < kernels_.size(); ++i) {
    h = ad::conv1d(h, kernels_[i], 1);
    h = ad::relu(norms_[i].forward(h, ctx));
  }
  h = ad::maxpool1d(h, cfg_.pool2_size, cfg_.pool2_stride);
  return ad::reshape(h, {h.dim(0), h.dim(1) * h.dim(2)});
}

CnnBranchPair::CnnBranchPair(ParameterStore& store, const std::string& prefix, ParamGroup group,
                             std::size_t in_channels, std::size_t n_samples,
                             const ConvBranchConfig& fine, const ConvBranchConfig& coarse,
                             std::mt19937_64& rng)
    : fine_(store, prefix + ".fine", group, in_channels, n_samples, fine, rng),
      coarse_(store, prefix + ".coarse", group, in_channels, n_samples, coarse, rng) {}

Tensor CnnBranchPair::forward(const Tensor& x, const ForwardContext& ctx) const {
  return ad::concat({fine_.forward(x, ctx), coarse_.forward(x, ctx)}, 1);
}

// ---------------------------------------------------------------------------

Tensor residual_combine(const Tensor& x, const Tensor& o, const Linear& fc) {
  if (fc.out_size() != o.dim(1)) {
    throw ShapeError("residual projection yields " + std::to_string(fc.out_size()) +
                     " features but the sequence output has " + std::to_string(o.dim(1)));
  }
  return o + fc.forward(x);
}

SoftmaxHead::SoftmaxHead(ParameterStore& store, const std::string& prefix, std::size_t input_size,
                         std::size_t n_classes, std::mt19937_64& rng)
    : fc_(store, prefix, ParamGroup::SOFTMAX, input_size, n_classes, rng) {}

Tensor SoftmaxHead::forward(const Tensor& x) const { return ad::softmax(fc_.forward(x)); }

}  // namespace sleeptl::layers
