// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace sleeptl {

struct StftParams {
  double win_len_s = 2.0;
  double hop_s = 1.0;
  std::size_t n_fft = 256;
  double sample_rate_hz = 100.0;
  double power_floor = 1e-12;

  std::size_t win_samples() const;
  std::size_t hop_samples() const;
  std::size_t n_bins() const { return n_fft / 2 + 1; }
  /// Frames over a signal of `n_samples` (0 when shorter than one window).
  std::size_t n_frames(std::size_t n_samples) const;
  /// Throws ConfigError for non-positive sizes or n_fft below the window.
  void validate() const;
};

nlohmann::json to_json(const StftParams& p);
StftParams stft_params_from_json(const nlohmann::json& j);

/// Time-frequency image, row-major [frames][bins][channels].
struct EpochImage {
  std::size_t frames = 0;
  std::size_t bins = 0;
  std::size_t channels = 0;
  double frame_hop_s = 0.0;
  double win_len_s = 0.0;
  std::vector<double> data;

  double at(std::size_t t, std::size_t f, std::size_t c) const {
    return data[(t * bins + f) * channels + c];
  }
  double& at(std::size_t t, std::size_t f, std::size_t c) {
    return data[(t * bins + f) * channels + c];
  }
};

/// Hamming-windowed power spectrogram of one channel, log(max(|X|^2, floor)).
EpochImage stft_log_power(std::span<const double> samples, const StftParams& params);

/// Stacks single-channel images along the channel axis, in the given order.
EpochImage stack_channels(const std::vector<EpochImage>& per_channel);

/// Raw multi-channel epoch, row-major [samples][channels].
struct RawEpoch {
  std::size_t samples = 0;
  std::size_t channels = 0;
  std::vector<double> data;
};

RawEpoch stack_channels(const std::vector<std::span<const double>>& per_channel);

/// Modalities in their fixed stacking order.
inline constexpr const char* kModalityOrder[] = {"EEG", "EOG", "EMG"};

/// Throws ConfigError unless `names` is a subsequence of (EEG, EOG, EMG).
void check_channel_order(const std::vector<std::string>& names);

/// Per-(bin, channel) statistics, [bins][channels].
struct NormalizationStats {
  std::size_t bins = 0;
  std::size_t channels = 0;
  std::vector<double> mean;
  std::vector<double> std;
};

inline constexpr double kStdFloor = 1e-6;

/// Streaming accumulator over training images (Chan's parallel update).
class NormalizationAccumulator {
 public:
  void add(const EpochImage& image);
  std::size_t images() const { return n_images_; }
  /// `split` must be "train": statistics never come from held-out subjects.
  NormalizationStats finish(std::string_view split) const;

 private:
  std::size_t bins_ = 0, channels_ = 0, n_images_ = 0;
  double count_ = 0.0;
  std::vector<double> mean_, m2_;
};

NormalizationStats fit_normalization(const std::vector<EpochImage>& images,
                                     std::string_view split);

EpochImage apply_normalization(const EpochImage& image, const NormalizationStats& stats);
EpochImage invert_normalization(const EpochImage& image, const NormalizationStats& stats);

nlohmann::json to_json(const NormalizationStats& s);
NormalizationStats normalization_from_json(const nlohmann::json& j);

}  // namespace sleeptl
