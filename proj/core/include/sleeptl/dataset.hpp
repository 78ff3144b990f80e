// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sleeptl/autodiff.hpp"
#include "sleeptl/features.hpp"
#include "sleeptl/models.hpp"
#include "sleeptl/recording.hpp"

namespace sleeptl {

/// A recording turned into per-epoch model inputs.
///  - Spectrogram: each epoch is an image [frames][bins][channels].
///  - Raw: each epoch is [channels][samples].
struct PreparedRecording {
  std::string id;
  std::string subject;
  InputKind kind = InputKind::Spectrogram;
  std::vector<std::string> channel_names;
  std::vector<StageLabel> labels;
  std::vector<std::size_t> epoch_index;
  std::size_t channels = 0;
  std::size_t frames = 0;   // spectrogram only
  std::size_t bins = 0;     // spectrogram only
  std::size_t samples = 0;  // raw only
  std::vector<double> data;

  std::size_t n_epochs() const { return labels.size(); }
  std::size_t epoch_size() const;
  std::span<const double> epoch(std::size_t e) const;
  EpochImage image(std::size_t e) const;
  std::vector<EpochRun> runs() const;
};

/// Unnormalized features of a canonical recording.
PreparedRecording prepare_recording(const Recording& rec, InputKind kind,
                                    const StftParams& stft);

/// Keeps the named channels, in the given order.
Recording select_recording_channels(const Recording& rec, const std::vector<std::string>& names);

NormalizationStats fit_normalization(const std::vector<PreparedRecording>& recordings,
                                     std::string_view split);
void normalize_in_place(PreparedRecording& rec, const NormalizationStats& stats);

/// Start of one L-epoch sequence: recording number and epoch position.
struct SequenceRef {
  std::size_t recording = 0;
  std::size_t start = 0;
};

/// Hop-`hop` sequences inside contiguous runs of every recording.
std::vector<SequenceRef> enumerate_sequences(const std::vector<PreparedRecording>& recs,
                                             std::size_t seq_len, std::size_t hop = 1);

struct Batch {
  ModelInput input;
  /// One-hot targets [L * B, classes], rows l * B + b.
  ad::Tensor targets;
  /// Labels in the same row order.
  std::vector<StageLabel> labels;
};

/// Assembles the model input for the listed sequences.
Batch make_batch(const std::vector<PreparedRecording>& recs, std::span<const SequenceRef> seqs,
                 std::size_t seq_len);
/// Sequences of a single recording starting at the given epochs.
Batch make_batch(const PreparedRecording& rec, std::span<const std::size_t> starts,
                 std::size_t seq_len);

/// One dataset of recordings split by subject.
struct SubjectSplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
};

/// Distinct subject ids in order of first appearance.
std::vector<std::string> subjects_of(const std::vector<PreparedRecording>& recs);
std::vector<std::string> subjects_of(const std::vector<Recording>& recs);

/// Recordings whose subject is in `subjects`, in original order.
template <typename R>
std::vector<R> filter_subjects(const std::vector<R>& recs,
                               const std::vector<std::string>& subjects);

}  // namespace sleeptl
