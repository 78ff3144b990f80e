// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/features.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fft_plans.hpp"
#include "sleeptl/error.hpp"

namespace sleeptl {
namespace {

std::size_t to_samples(double seconds, double rate, const char* field) {
  const double n = seconds * rate;
  const double r = std::round(n);
  if (!(r >= 1.0) || std::abs(n - r) > 1e-9 * std::max(1.0, n)) {
    throw ConfigError(std::string("stft.") + field + ": " + std::to_string(seconds) +
                      " s is not a positive whole number of samples");
  }
  return static_cast<std::size_t>(r);
}

}  // namespace

std::size_t StftParams::win_samples() const {
  return to_samples(win_len_s, sample_rate_hz, "win_len_s");
}

std::size_t StftParams::hop_samples() const { return to_samples(hop_s, sample_rate_hz, "hop_s"); }

std::size_t StftParams::n_frames(std::size_t n_samples) const {
  const std::size_t win = win_samples(), hop = hop_samples();
  if (n_samples < win) return 0;
  return (n_samples - win) / hop + 1;
}

void StftParams::validate() const {
  if (!(sample_rate_hz > 0)) throw ConfigError("stft.sample_rate_hz must be positive");
  if (!(power_floor > 0)) throw ConfigError("stft.power_floor must be positive");
  const std::size_t win = win_samples();
  hop_samples();
  if (n_fft < win) {
    throw ConfigError("stft.n_fft (" + std::to_string(n_fft) + ") is shorter than the window (" +
                      std::to_string(win) + " samples)");
  }
}

nlohmann::json to_json(const StftParams& p) {
  return {{"win_len_s", p.win_len_s}, {"hop_s", p.hop_s}, {"n_fft", p.n_fft},
          {"sample_rate_hz", p.sample_rate_hz}, {"power_floor", p.power_floor}};
}

StftParams stft_params_from_json(const nlohmann::json& j) {
  StftParams p;
  try {
    if (j.contains("win_len_s")) p.win_len_s = j.at("win_len_s").get<double>();
    if (j.contains("hop_s")) p.hop_s = j.at("hop_s").get<double>();
    if (j.contains("n_fft")) p.n_fft = j.at("n_fft").get<std::size_t>();
    if (j.contains("sample_rate_hz")) p.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    if (j.contains("power_floor")) p.power_floor = j.at("power_floor").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("stft: ") + e.what());
  }
  p.validate();
  return p;
}

EpochImage stft_log_power(std::span<const double> samples, const StftParams& params) {
  params.validate();
  const std::size_t win = params.win_samples(), hop = params.hop_samples();
  const std::size_t n_fft = params.n_fft, bins = params.n_bins();
  const std::size_t frames = params.n_frames(samples.size());
  if (frames == 0) {
    throw DataError("signal of " + std::to_string(samples.size()) +
                    " samples is shorter than one STFT window");
  }

  std::vector<double> window(win);
  for (std::size_t i = 0; i < win; ++i) {
    window[i] = win == 1 ? 1.0
                         : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                  static_cast<double>(win - 1));
  }

  EpochImage img;
  img.frames = frames;
  img.bins = bins;
  img.channels = 1;
  img.frame_hop_s = params.hop_s;
  img.win_len_s = params.win_len_s;
  img.data.resize(frames * bins);

  detail::FftwReal in = detail::fftw_real(n_fft);
  detail::FftwComplex out = detail::fftw_complex_buf(bins);
  for (std::size_t t = 0; t < frames; ++t) {
    double* buf = in.get();
    std::fill(buf, buf + n_fft, 0.0);
    for (std::size_t i = 0; i < win; ++i) buf[i] = samples[t * hop + i] * window[i];
    detail::execute_r2c(n_fft, buf, out.get());
    for (std::size_t f = 0; f < bins; ++f) {
      const double re = out.get()[f][0], im = out.get()[f][1];
      img.data[t * bins + f] = std::log(std::max(re * re + im * im, params.power_floor));
    }
  }
  return img;
}

EpochImage stack_channels(const std::vector<EpochImage>& per_channel) {
  if (per_channel.empty()) throw ShapeError("stack_channels: no channels");
  const auto& first = per_channel.front();
  EpochImage out;
  out.frames = first.frames;
  out.bins = first.bins;
  out.frame_hop_s = first.frame_hop_s;
  out.win_len_s = first.win_len_s;
  for (const auto& img : per_channel) {
    if (img.frames != first.frames || img.bins != first.bins) {
      throw ShapeError("stack_channels: image shapes differ");
    }
    out.channels += img.channels;
  }
  out.data.resize(out.frames * out.bins * out.channels);
  std::size_t c0 = 0;
  for (const auto& img : per_channel) {
    for (std::size_t t = 0; t < out.frames; ++t) {
      for (std::size_t f = 0; f < out.bins; ++f) {
        for (std::size_t c = 0; c < img.channels; ++c) out.at(t, f, c0 + c) = img.at(t, f, c);
      }
    }
    c0 += img.channels;
  }
  return out;
}

RawEpoch stack_channels(const std::vector<std::span<const double>>& per_channel) {
  if (per_channel.empty()) throw ShapeError("stack_channels: no channels");
  RawEpoch out;
  out.samples = per_channel.front().size();
  out.channels = per_channel.size();
  for (const auto& ch : per_channel) {
    if (ch.size() != out.samples) throw ShapeError("stack_channels: channel lengths differ");
  }
  out.data.resize(out.samples * out.channels);
  for (std::size_t i = 0; i < out.samples; ++i) {
    for (std::size_t c = 0; c < out.channels; ++c) out.data[i * out.channels + c] = per_channel[c][i];
  }
  return out;
}

void check_channel_order(const std::vector<std::string>& names) {
  if (names.empty()) throw ConfigError("channel list is empty");
  std::size_t next = 0;
  for (const auto& n : names) {
    std::size_t k = next;
    while (k < std::size(kModalityOrder) && n != kModalityOrder[k]) ++k;
    if (k == std::size(kModalityOrder)) {
      throw ConfigError("channel '" + n +
                        "' is out of order or unknown; channels must follow EEG, EOG, EMG");
    }
    next = k + 1;
  }
}

void NormalizationAccumulator::add(const EpochImage& image) {
  if (n_images_ == 0) {
    bins_ = image.bins;
    channels_ = image.channels;
    mean_.assign(bins_ * channels_, 0.0);
    m2_.assign(bins_ * channels_, 0.0);
  } else if (image.bins != bins_ || image.channels != channels_) {
    throw ShapeError("fit_normalization: image shapes differ");
  }
  const double nb = static_cast<double>(image.frames);
  if (nb == 0) return;
  for (std::size_t f = 0; f < bins_; ++f) {
    for (std::size_t c = 0; c < channels_; ++c) {
      double m = 0.0;
      for (std::size_t t = 0; t < image.frames; ++t) m += image.at(t, f, c);
      m /= nb;
      double s = 0.0;
      for (std::size_t t = 0; t < image.frames; ++t) {
        const double d = image.at(t, f, c) - m;
        s += d * d;
      }
      const std::size_t k = f * channels_ + c;
      const double na = count_, n = na + nb;
      const double delta = m - mean_[k];
      mean_[k] += delta * nb / n;
      m2_[k] += s + delta * delta * na * nb / n;
    }
  }
  count_ += nb;
  ++n_images_;
}

NormalizationStats NormalizationAccumulator::finish(std::string_view split) const {
  if (split != "train") {
    throw DataError("normalization statistics must be fitted on the training split, got '" +
                    std::string(split) + "'");
  }
  if (n_images_ < 2) {
    throw DataError("fit_normalization needs at least 2 images, got " + std::to_string(n_images_));
  }
  NormalizationStats s;
  s.bins = bins_;
  s.channels = channels_;
  s.mean = mean_;
  s.std.resize(m2_.size());
  for (std::size_t k = 0; k < m2_.size(); ++k) {
    s.std[k] = std::max(std::sqrt(std::max(m2_[k], 0.0) / count_), kStdFloor);
  }
  return s;
}

NormalizationStats fit_normalization(const std::vector<EpochImage>& images,
                                     std::string_view split) {
  NormalizationAccumulator acc;
  for (const auto& img : images) acc.add(img);
  return acc.finish(split);
}

namespace {

void check_stats(const EpochImage& image, const NormalizationStats& stats) {
  if (image.bins != stats.bins || image.channels != stats.channels) {
    throw ShapeError("normalization statistics are [" + std::to_string(stats.bins) + " x " +
                     std::to_string(stats.channels) + "] but the image has " +
                     std::to_string(image.bins) + " bins and " + std::to_string(image.channels) +
                     " channels");
  }
}

}  // namespace

EpochImage apply_normalization(const EpochImage& image, const NormalizationStats& stats) {
  check_stats(image, stats);
  EpochImage out = image;
  for (std::size_t t = 0; t < image.frames; ++t) {
    for (std::size_t k = 0; k < stats.mean.size(); ++k) {
      double& v = out.data[t * stats.mean.size() + k];
      v = (v - stats.mean[k]) / stats.std[k];
    }
  }
  return out;
}

EpochImage invert_normalization(const EpochImage& image, const NormalizationStats& stats) {
  check_stats(image, stats);
  EpochImage out = image;
  for (std::size_t t = 0; t < image.frames; ++t) {
    for (std::size_t k = 0; k < stats.mean.size(); ++k) {
      double& v = out.data[t * stats.mean.size() + k];
      v = v * stats.std[k] + stats.mean[k];
    }
  }
  return out;
}

nlohmann::json to_json(const NormalizationStats& s) {
  return {{"bins", s.bins}, {"channels", s.channels}, {"mean", s.mean}, {"std", s.std}};
}

NormalizationStats normalization_from_json(const nlohmann::json& j) {
  NormalizationStats s;
  try {
    s.bins = j.at("bins").get<std::size_t>();
    s.channels = j.at("channels").get<std::size_t>();
    s.mean = j.at("mean").get<std::vector<double>>();
    s.std = j.at("std").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("normalization", e.what());
  }
  if (s.mean.size() != s.bins * s.channels || s.std.size() != s.mean.size()) {
    throw ParseError("normalization", "mean/std sizes do not match bins x channels");
  }
  return s;
}

}  // namespace sleeptl
