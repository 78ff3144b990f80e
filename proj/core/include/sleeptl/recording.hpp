// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sleeptl/hypnogram.hpp"
#include "sleeptl/stage.hpp"

namespace sleeptl {

inline constexpr double kCanonicalRateHz = 100.0;
inline constexpr double kCanonicalEpochSec = 30.0;
inline constexpr std::size_t kSamplesPerEpoch = 3000;

struct Channel {
  std::string name;
  std::vector<double> samples;
  double sample_rate_hz = 0.0;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate_hz;
  }
};

/// Contiguous block of epochs `[start, start + count)` in a recording whose
/// original scoring indices are consecutive.
struct EpochRun {
  std::size_t start = 0;
  std::size_t count = 0;
};

/// A recording cut into scored epochs. Channel samples are the concatenation
/// of the epochs in order, so epoch `e` of a channel at rate r covers samples
/// `[e * r * epoch_len_s, (e + 1) * r * epoch_len_s)`.
///
/// `epoch_index[e]` is the index of epoch `e` in the original scoring grid;
/// it survives expansion, trimming and exclusion so that lights-off/on
/// markers and contiguity can always be resolved against the original grid.
///
/// `Label` is the raw hypnogram token (`std::string`) before stage mapping
/// and `StageLabel` after it.
template <typename Label>
struct BasicRecording {
  std::string id;
  std::string subject;
  std::vector<Channel> channels;
  std::vector<Label> labels;
  std::vector<std::size_t> epoch_index;
  std::optional<std::size_t> lights_off_epoch;
  std::optional<std::size_t> lights_on_epoch;
  double epoch_len_s = kCanonicalEpochSec;

  std::size_t n_epochs() const { return labels.size(); }
};

using ScoredRecording = BasicRecording<std::string>;
using Recording = BasicRecording<StageLabel>;

/// One input sequence of L consecutive epochs of a recording.
struct EpochSequence {
  std::size_t recording = 0;
  std::size_t source_epoch_index = 0;
  std::size_t length = 0;
};

/// Consecutive-index runs of a recording's epochs.
template <typename Label>
std::vector<EpochRun> contiguous_runs(const BasicRecording<Label>& rec);

/// Builds a scored recording from continuous channels and one raw token per
/// epoch. Every channel is truncated to the scored length; tokens with no
/// complete signal behind them are dropped.
ScoredRecording make_scored_recording(std::string id, std::vector<Channel> channels,
                                      std::vector<std::string> tokens,
                                      double epoch_len_s);

/// Re-cuts a recording scored in 20 s epochs into 30 s epochs by adding 5 s
/// of signal on each side. Epochs without 5 s of context on both sides are
/// dropped. The input must be an untouched continuous scoring.
ScoredRecording expand_epochs_20_to_30(const ScoredRecording& rec);

/// Keeps epochs whose original index lies in [lights_off, lights_on).
template <typename Label>
BasicRecording<Label> trim_to_in_bed(const BasicRecording<Label>& rec);

/// Applies `map_stages` and cuts the excluded epochs out of the signal.
Recording map_recording(const ScoredRecording& rec, ScoringStandard standard);

/// Channel-name matching: a logical name ("EEG") and the header labels that
/// may carry it in a given dataset ("EEG Fpz-Cz", "C4-A1", ...). Matching is
/// exact-string.
struct ChannelAlias {
  std::string logical;
  std::vector<std::string> header_names;
};

/// Picks the named channels in order and renames them to their logical names.
std::vector<Channel> select_channels(const std::vector<Channel>& channels,
                                     const std::vector<ChannelAlias>& wanted);

struct CanonicalizeOptions {
  /// Empty keeps every channel under its header name.
  std::vector<ChannelAlias> channels;
};

/// Full ingestion pipeline: select, resample to 100 Hz, expand 20 s scoring,
/// trim to in-bed, map stages and drop excluded epochs.
Recording canonicalize(std::string id, const std::vector<Channel>& raw_channels,
                       const Hypnogram& hypnogram, const CanonicalizeOptions& opts);

/// Throws DataError unless the recording satisfies the canonical invariants
/// (100 Hz, 30 s epochs, samples == n_epochs * 3000 on every channel).
void check_canonical(const Recording& rec);

/// Sequences of `length` epochs with the given hop, never crossing a gap in
/// the original scoring. Runs shorter than `length` yield nothing.
std::vector<EpochSequence> sample_sequences(const Recording& rec, std::size_t recording_id,
                                            std::size_t length, std::size_t hop);

/// Number of sequences a run of `n_epochs` yields.
std::size_t sequence_count(std::size_t n_epochs, std::size_t length, std::size_t hop);

/// Samples of one channel for one epoch.
std::span<const double> epoch_samples(const Recording& rec, std::size_t channel,
                                      std::size_t epoch);

}  // namespace sleeptl
