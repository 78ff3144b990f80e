// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "sleeptl/autodiff.hpp"
#include "sleeptl/parameter_store.hpp"

/// Neural building blocks. Sequences of vectors are passed as 2-D tensors in
/// time-major row order: row `t * N + n` holds step t of batch item n.
namespace sleeptl::layers {

using ad::Tensor;

struct ForwardContext {
  bool train = false;
  /// Dropout masks; required when `train` is true.
  std::mt19937_64* rng = nullptr;
  /// Batch-norm running statistics of these groups are left untouched.
  std::set<ParamGroup> frozen;

  bool update_running(ParamGroup g) const { return train && !frozen.count(g); }
};

/// Stacks per-step [N, D] tensors into one [T * N, D] tensor.
Tensor stack_steps(const std::vector<Tensor>& steps);
/// Inverse of stack_steps.
std::vector<Tensor> split_steps(const Tensor& x, std::size_t steps);

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& prefix, ParamGroup group, std::size_t in,
         std::size_t out, std::mt19937_64& rng);

  /// x[N, in] -> x W + b, [N, out].
  Tensor forward(const Tensor& x) const;

  std::size_t in_size() const { return in_; }
  std::size_t out_size() const { return out_; }
  const Tensor& weight() const { return w_; }
  const Tensor& bias() const { return b_; }

 private:
  std::size_t in_ = 0, out_ = 0;
  Tensor w_, b_;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(ParameterStore& store, const std::string& prefix, ParamGroup group,
            std::size_t features, double gamma_init = 1.0);

  Tensor forward(const Tensor& x, const ForwardContext& ctx, std::size_t axis = 1) const;
  /// Learned shift only; used where the input is known to be constant zero.
  Tensor shift_only(std::size_t rows) const;

 private:
  ParamGroup group_ = ParamGroup::EPB;
  Tensor gamma_, beta_, mean_, var_;
};

/// Learnable non-negative map along the frequency axis:
/// [rows, F] -> [rows, F] . sigmoid(W), W of shape [F, M].
class Filterbank {
 public:
  Filterbank() = default;
  Filterbank(ParameterStore& store, const std::string& prefix, ParamGroup group,
             std::size_t n_bins, std::size_t n_filters, std::mt19937_64& rng);

  Tensor effective_weight() const;
  Tensor forward(const Tensor& x) const;

  std::size_t n_bins() const { return n_bins_; }
  std::size_t n_filters() const { return n_filters_; }
  const Tensor& weight() const { return w_; }

 private:
  std::size_t n_bins_ = 0, n_filters_ = 0;
  Tensor w_;
};

enum class RnnKind { GRU, LSTM };

/// GRU or LSTM cell. With `recurrent_bn` the GRU normalizes the input and
/// recurrent pre-activations separately, with per-step batch statistics and
/// one running accumulator per normalizer.
class RnnCell {
 public:
  RnnCell() = default;
  RnnCell(ParameterStore& store, const std::string& prefix, ParamGroup group, RnnKind kind,
          std::size_t input_size, std::size_t hidden_size, bool recurrent_bn,
          std::mt19937_64& rng);

  /// Runs over `steps` steps of x[steps * N, in] starting from zero state.
  /// Returns hidden states in input order (also when `reverse`).
  std::vector<Tensor> run(const Tensor& x, std::size_t steps, bool reverse,
                          const ForwardContext& ctx) const;

  RnnKind kind() const { return kind_; }
  std::size_t input_size() const { return input_size_; }
  std::size_t hidden_size() const { return hidden_; }

 private:
  Tensor gru_step(const Tensor& xw, const Tensor& h, bool first,
                  const ForwardContext& ctx) const;

  RnnKind kind_ = RnnKind::GRU;
  ParamGroup group_ = ParamGroup::EPB;
  std::size_t input_size_ = 0, hidden_ = 0;
  bool recurrent_bn_ = false;
  // GRU: wx [in, 3h] (z|r|n), u_zr [h, 2h], u_n [h, h], b [3h].
  // LSTM: wx [in, 4h] (i|f|g|o), u [h, 4h], b [4h].
  Tensor wx_, u_zr_, u_n_, u_, b_;
  BatchNorm bn_x_, bn_zr_, bn_n_;
};

struct BiRnnStates {
  std::vector<Tensor> forward;   // h^f_t
  std::vector<Tensor> backward;  // h^b_t
};

class BiRnn {
 public:
  BiRnn() = default;
  BiRnn(ParameterStore& store, const std::string& prefix, ParamGroup group, RnnKind kind,
        std::size_t input_size, std::size_t hidden_size, bool recurrent_bn, std::mt19937_64& rng);

  /// Empty sequences are rejected.
  BiRnnStates forward(const Tensor& x, std::size_t steps, const ForwardContext& ctx) const;

  const RnnCell& forward_cell() const { return fwd_; }
  const RnnCell& backward_cell() const { return bwd_; }
  std::size_t hidden_size() const { return fwd_.hidden_size(); }

 private:
  RnnCell fwd_, bwd_;
};

/// Runs both cells over the same sequence; exposed for tests that share
/// parameters between directions.
BiRnnStates birnn_forward(const Tensor& x, std::size_t steps, const RnnCell& fwd,
                          const RnnCell& bwd, const ForwardContext& ctx);

/// Per-step h_b ⊕ h_f stacked to [T * N, 2h].
Tensor birnn_concat(const BiRnnStates& states);

/// o_t = W_ho (h_b[t] ⊕ h_f[t]) + b_o, stacked to [T * N, out].
Tensor birnn_output(const BiRnnStates& states, const Linear& w_ho);

/// Additive attention pooling over time: a_t = softmax_t(tanh(h_t Wa + b) . u).
class Attention {
 public:
  Attention() = default;
  Attention(ParameterStore& store, const std::string& prefix, ParamGroup group,
            std::size_t input_size, std::size_t attention_size, std::mt19937_64& rng);

  /// Attention weights [N, T] for per-step states [N, D].
  Tensor weights(const std::vector<Tensor>& states) const;
  /// Weighted sum of the states, [N, D].
  Tensor forward(const std::vector<Tensor>& states) const;

  const Tensor& projection() const { return wa_; }
  const Tensor& projection_bias() const { return ba_; }
  const Tensor& context() const { return u_; }

 private:
  Tensor wa_, ba_, u_;
};

/// conv -> BN -> ReLU -> pool, then `n_convs` x (conv -> BN -> ReLU), then pool.
struct ConvBranchConfig {
  std::size_t first_kernel = 50;
  std::size_t first_stride = 6;
  std::size_t first_filters = 64;
  std::size_t pool1_size = 8;
  std::size_t pool1_stride = 8;
  std::size_t n_convs = 3;
  std::size_t kernel = 8;
  std::size_t filters = 128;
  std::size_t pool2_size = 4;
  std::size_t pool2_stride = 4;
};

class ConvBranch {
 public:
  ConvBranch() = default;
  ConvBranch(ParameterStore& store, const std::string& prefix, ParamGroup group,
             std::size_t in_channels, std::size_t n_samples, const ConvBranchConfig& cfg,
             std::mt19937_64& rng);

  /// x[E, C, n] -> [E, output_size()].
  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;

  std::size_t output_length() const { return out_len_; }
  std::size_t output_size() const;

 private:
  ConvBranchConfig cfg_;
  std::size_t in_channels_ = 0, n_samples_ = 0, out_len_ = 0;
  std::vector<Tensor> kernels_;
  std::vector<BatchNorm> norms_;
};

/// Number of features a branch yields for `n_samples` inputs (same padding).
std::size_t conv_branch_output_size(const ConvBranchConfig& cfg, std::size_t n_samples);

class CnnBranchPair {
 public:
  CnnBranchPair() = default;
  CnnBranchPair(ParameterStore& store, const std::string& prefix, ParamGroup group,
                std::size_t in_channels, std::size_t n_samples, const ConvBranchConfig& fine,
                const ConvBranchConfig& coarse, std::mt19937_64& rng);

  Tensor forward(const Tensor& x, const ForwardContext& ctx) const;
  std::size_t output_size() const { return fine_.output_size() + coarse_.output_size(); }

 private:
  ConvBranch fine_, coarse_;
};

/// o + FC(x); the FC is shared across sequence positions.
Tensor residual_combine(const Tensor& x, const Tensor& o, const Linear& fc);

/// Shared classification layer applied to every sequence position.
class SoftmaxHead {
 public:
  SoftmaxHead() = default;
  SoftmaxHead(ParameterStore& store, const std::string& prefix, std::size_t input_size,
              std::size_t n_classes, std::mt19937_64& rng);

  /// [rows, D] -> class distributions [rows, n_classes].
  Tensor forward(const Tensor& x) const;

  const Linear& linear() const { return fc_; }

 private:
  Linear fc_;
};

}  // namespace sleeptl::layers
