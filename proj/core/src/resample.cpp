// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "sleeptl/error.hpp"

namespace sleeptl {
namespace {

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

long to_millihertz(double hz) {
  if (!(hz > 0) || !std::isfinite(hz)) {
    throw ConfigError("sample rate must be positive, got " + std::to_string(hz));
  }
  double mhz = hz * 1000.0;
  double r = std::round(mhz);
  if (std::abs(r - mhz) > 1e-6 * std::max(1.0, mhz)) {
    throw ConfigError("sample rate " + std::to_string(hz) + " Hz is not a whole number of mHz");
  }
  return static_cast<long>(r);
}

}  // namespace

ResampleRatio resample_ratio(double from_hz, double to_hz) {
  long from = to_millihertz(from_hz);
  long to = to_millihertz(to_hz);
  long g = std::gcd(from, to);
  return {to / g, from / g};
}

std::vector<double> polyphase_lowpass(ResampleRatio ratio, double kaiser_beta) {
  const long max_rate = std::max(ratio.up, ratio.down);
  const long half_len = 10 * max_rate;
  const std::size_t n = static_cast<std::size_t>(2 * half_len + 1);
  const double cutoff = 1.0 / static_cast<double>(max_rate);  // fraction of Nyquist
  const double i0_beta = std::cyl_bessel_i(0.0, kaiser_beta);

  std::vector<double> h(n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = static_cast<double>(i) - static_cast<double>(half_len);
    const double r = 2.0 * static_cast<double>(i) / static_cast<double>(n - 1) - 1.0;
    const double w = std::cyl_bessel_i(0.0, kaiser_beta * std::sqrt(std::max(0.0, 1.0 - r * r))) /
                     i0_beta;
    h[i] = cutoff * sinc(cutoff * m) * w;
    sum += h[i];
  }
  const double scale = static_cast<double>(ratio.up) / sum;
  for (auto& v : h) v *= scale;
  return h;
}

std::vector<double> resample_poly(std::span<const double> x, ResampleRatio ratio,
                                  double kaiser_beta) {
  if (ratio.up <= 0 || ratio.down <= 0) throw ConfigError("resample factors must be positive");
  if (ratio.up == 1 && ratio.down == 1) return {x.begin(), x.end()};

  const auto h = polyphase_lowpass(ratio, kaiser_beta);
  const long taps = static_cast<long>(h.size());
  const long half_len = (taps - 1) / 2;
  const long n_in = static_cast<long>(x.size());
  const long total = n_in * ratio.up;
  const long n_out = total / ratio.down + (total % ratio.down != 0 ? 1 : 0);

  std::vector<double> y(static_cast<std::size_t>(n_out), 0.0);
  for (long j = 0; j < n_out; ++j) {
    const long center = j * ratio.down + half_len;
    // Need 0 <= center - i*up <= taps - 1.
    long i_lo = center - (taps - 1);
    i_lo = i_lo <= 0 ? 0 : (i_lo + ratio.up - 1) / ratio.up;
    long i_hi = std::min(center / ratio.up, n_in - 1);
    double acc = 0.0;
    for (long i = i_lo; i <= i_hi; ++i) {
      acc += x[static_cast<std::size_t>(i)] * h[static_cast<std::size_t>(center - i * ratio.up)];
    }
    y[static_cast<std::size_t>(j)] = acc;
  }
  return y;
}

Channel resample_to_100hz(const Channel& channel) {
  auto ratio = resample_ratio(channel.sample_rate_hz, kCanonicalRateHz);
  Channel out;
  out.name = channel.name;
  out.sample_rate_hz = kCanonicalRateHz;
  out.samples = resample_poly(channel.samples, ratio);
  return out;
}

}  // namespace sleeptl
