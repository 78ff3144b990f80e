// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sleeptl/recording.hpp"
#include "sleeptl/stage.hpp"

namespace sleeptl {

/// Gaussian bump in a power spectral density.
struct SpectralBand {
  double center_hz = 0.0;
  double width_hz = 1.0;
  double power = 0.0;
};

/// Spectral shape of one stage on each modality.
struct ClassTemplate {
  std::vector<SpectralBand> eeg;
  std::vector<SpectralBand> eog;
  std::vector<SpectralBand> emg;
};

/// Recording-device response applied to every synthesized channel.
struct DeviceTransfer {
  double gain = 1.0;
  /// Power slope around `tilt_ref_hz`, dB per decade.
  double tilt_db_per_decade = 0.0;
  double tilt_ref_hz = 10.0;
  /// Standard deviation of additive white noise.
  double noise_std = 0.0;
};

struct DomainSpec {
  std::string name = "synth";
  std::size_t n_subjects = 20;
  std::size_t epochs_per_subject = 100;
  /// W, N1, N2, N3, REM.
  std::array<double, kNumStages> priors{0.2, 0.08, 0.4, 0.14, 0.18};
  /// Probability of repeating the previous stage; otherwise a fresh draw
  /// from `priors`, which keeps `priors` stationary.
  double persistence = 0.85;
  std::array<ClassTemplate, kNumStages> templates;
  /// Flat floor added to every PSD.
  double floor_power = 0.02;
  /// Subset of EEG, EOG, EMG in that order.
  std::vector<std::string> channels{"EEG"};
  DeviceTransfer device;
  /// Per-subject spread of amplitude (log scale) and band centers (relative).
  double subject_jitter = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Spec with the built-in stage templates.
DomainSpec default_domain_spec();

nlohmann::json to_json(const DomainSpec& s);
/// Missing keys keep the defaults of default_domain_spec().
DomainSpec domain_spec_from_json(const nlohmann::json& j);

/// One canonical recording per subject, fully determined by the spec.
std::vector<Recording> generate_domain(const DomainSpec& spec);

/// Device change per mismatch level.
struct MismatchStep {
  /// Gain multiplier per level.
  double gain_ratio = 1.5;
  double tilt_db_per_decade = -3.0;
  double noise_std = 0.05;
};

/// One spec per level with the device moved `level` steps away from the
/// base. Level 0 reproduces the base device.
std::vector<DomainSpec> mismatch_ladder(const DomainSpec& base, const std::vector<double>& levels,
                                        const MismatchStep& step = {});

/// Distance between two device transfers: |gain ratio in dB| + |tilt
/// difference| + |noise difference| * 10.
double transfer_distance(const DeviceTransfer& a, const DeviceTransfer& b);

}  // namespace sleeptl
