// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <span>
#include <vector>

#include "sleeptl/recording.hpp"

namespace sleeptl {

struct ResampleRatio {
  long up = 1;
  long down = 1;
};

/// Reduced rational up/down factors taking `from_hz` to `to_hz`. Rates are
/// resolved to 1 mHz; anything finer throws ConfigError.
ResampleRatio resample_ratio(double from_hz, double to_hz);

/// Kaiser-windowed sinc low-pass for polyphase resampling, scaled so each
/// polyphase branch has unit DC gain. Length is 20 * max(up, down) + 1.
std::vector<double> polyphase_lowpass(ResampleRatio ratio, double kaiser_beta = 8.0);

/// Zero-phase polyphase resampling (zero padding at the edges). Output length
/// is ceil(n * up / down).
std::vector<double> resample_poly(std::span<const double> x, ResampleRatio ratio,
                                  double kaiser_beta = 8.0);

/// Resamples a channel to exactly 100 Hz; identity for 100 Hz input.
Channel resample_to_100hz(const Channel& channel);

}  // namespace sleeptl
