// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "sleeptl/autodiff.hpp"
#include "sleeptl/layers.hpp"
#include "sleeptl/parameter_store.hpp"

namespace sleeptl {

enum class ModelKind { SeqSleepNetPlus, DeepSleepNetPlus };

std::string to_string(ModelKind k);
ModelKind parse_model_kind(const std::string& name);

/// What the epoch processing block consumes.
enum class InputKind { Spectrogram, Raw };

InputKind input_kind(ModelKind k);
/// "spectrogram" or "raw".
std::string to_string(InputKind k);
InputKind parse_input_kind(const std::string& name);

struct SeqSleepNetConfig {
  std::size_t n_frames = 29;
  std::size_t n_bins = 129;
  std::size_t n_filters = 32;
  std::size_t epb_hidden = 64;
  std::size_t attention_size = 64;
  std::size_t spb_hidden = 64;
  /// Size of o_l; 0 means 2 * spb_hidden.
  std::size_t spb_output = 0;
  bool recurrent_bn = true;
};

struct DeepSleepNetConfig {
  std::size_t n_samples = 3000;
  layers::ConvBranchConfig fine{50, 6, 64, 8, 8, 3, 8, 128, 4, 4};
  layers::ConvBranchConfig coarse{400, 50, 64, 4, 4, 3, 6, 128, 2, 2};
  std::size_t spb_hidden = 512;
  std::size_t spb_layers = 2;
  /// Size of o_l and of the residual projection.
  std::size_t spb_output = 1024;
};

struct ModelConfig {
  ModelKind kind = ModelKind::SeqSleepNetPlus;
  std::size_t seq_len = 20;
  std::size_t n_channels = 1;
  std::size_t n_classes = 5;
  /// Unset picks the network's own setting (off for SeqSleepNet+, on for
  /// DeepSleepNet+); a contradicting value is rejected.
  std::optional<bool> residual;
  double l2 = 1e-3;
  double dropout = 0.25;
  SeqSleepNetConfig seqsleepnet;
  DeepSleepNetConfig deepsleepnet;

  bool residual_enabled() const;
  /// Throws ConfigError on an inconsistent configuration.
  void validate() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);
/// SHA-256 of the canonical JSON form.
std::string config_hash(const ModelConfig& c);

/// A minibatch of B sequences of L epochs. Epoch row e = l * B + b.
///  - Spectrogram input: x[C, T * E, F], row t * E + e of channel c.
///  - Raw input: x[E, C, n].
struct ModelInput {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  ad::Tensor x;

  std::size_t n_epochs() const { return batch * seq_len; }
};

/// EPB -> SPB -> shared softmax.
class SequenceModel {
 public:
  virtual ~SequenceModel() = default;
  SequenceModel(const SequenceModel&) = delete;
  SequenceModel& operator=(const SequenceModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  /// Epoch features x_l for every epoch row, [E, D].
  virtual ad::Tensor epoch_features(const ModelInput& in,
                                    const layers::ForwardContext& ctx) const = 0;
  /// Sequence outputs o_l (plus residual, when enabled), [E, D'].
  virtual ad::Tensor sequence_outputs(const ad::Tensor& x, std::size_t batch,
                                      std::size_t seq_len,
                                      const layers::ForwardContext& ctx) const = 0;

  const layers::SoftmaxHead& head() const { return head_; }

  /// Class distributions y_hat for every epoch row, [E, n_classes].
  ad::Tensor forward(const ModelInput& in, const layers::ForwardContext& ctx) const;

 protected:
  explicit SequenceModel(ModelConfig config) : config_(std::move(config)) {}
  ad::Tensor maybe_dropout(const ad::Tensor& x, const layers::ForwardContext& ctx) const;

  ModelConfig config_;
  ParameterStore store_;
  layers::SoftmaxHead head_;
};

/// Fresh model with parameters drawn from `seed`.
std::unique_ptr<SequenceModel> build_model(const ModelConfig& config, std::uint64_t seed);

/// E = -(1/L) sum_n sum_l y . log(max(y_hat, 1e-12)) [/ B] + (lambda/2) ||theta||^2.
/// `probs` and `targets` are [L * B, classes]; targets one-hot. `theta` may be
/// null when lambda is 0.
ad::Tensor sequence_loss(const ad::Tensor& probs, const ad::Tensor& targets,
                         std::size_t seq_len, const ParameterStore* theta, double lambda,
                         bool mean_over_batch = true);

inline constexpr double kProbFloor = 1e-12;

}  // namespace sleeptl
