// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sleeptl/dataset.hpp"
#include "sleeptl/features.hpp"
#include "sleeptl/recording.hpp"

namespace sleeptl {

/// Ingests `<id>.edf` with its sidecar `<id>.hyp.json`. Without a
/// "hypnogram" array in the sidecar, EDF+ annotations supply the tokens.
Recording ingest_recording(const std::filesystem::path& edf, const std::filesystem::path& sidecar,
                           const CanonicalizeOptions& opts);

/// Reads the optional channel alias table `channels.json`:
/// [{"logical": "EEG", "header_names": ["EEG Fpz-Cz"]}, ...].
CanonicalizeOptions read_dataset_options(const std::filesystem::path& dir);

/// Every `*.edf` of a dataset directory, sorted by id. A missing sidecar is
/// a DataError.
std::vector<Recording> ingest_dataset_dir(const std::filesystem::path& dir);

/// Writes `<id>.json` (manifest) and `<id>.f64` (float64 little endian,
/// channel-major [channels][samples]).
void save_recording(const Recording& rec, const std::filesystem::path& dir);
Recording load_recording(const std::filesystem::path& manifest);

/// Recordings plus `index.json` listing them.
void save_dataset(const std::vector<Recording>& recs, const std::filesystem::path& dir);
std::vector<Recording> load_dataset(const std::filesystem::path& dir);

/// SHA-256 over a recording's labels, indices, channel names and samples.
std::string recording_digest(const Recording& rec);

/// Unnormalized features, cached under `cache_dir` by recording digest,
/// input kind and STFT parameters when a cache directory is given.
PreparedRecording prepare_cached(const Recording& rec, InputKind kind, const StftParams& stft,
                                 const std::optional<std::filesystem::path>& cache_dir);

}  // namespace sleeptl
