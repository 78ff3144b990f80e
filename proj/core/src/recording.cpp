// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/recording.hpp"

#include <algorithm>
#include <cmath>

#include "sleeptl/error.hpp"
#include "sleeptl/resample.hpp"

namespace sleeptl {
namespace {

std::size_t whole_samples(double rate_hz, double seconds, const std::string& what) {
  double n = rate_hz * seconds;
  double r = std::round(n);
  if (std::abs(n - r) > 1e-9 * std::max(1.0, n)) {
    throw DataError(what + ": " + std::to_string(seconds) + " s at " + std::to_string(rate_hz) +
                    " Hz is not a whole number of samples");
  }
  return static_cast<std::size_t>(r);
}

// Copies the listed epochs of every channel into a new recording skeleton.
template <typename Label>
BasicRecording<Label> select_epochs(const BasicRecording<Label>& rec,
                                    const std::vector<std::size_t>& epochs) {
  BasicRecording<Label> out;
  out.id = rec.id;
  out.subject = rec.subject;
  out.lights_off_epoch = rec.lights_off_epoch;
  out.lights_on_epoch = rec.lights_on_epoch;
  out.epoch_len_s = rec.epoch_len_s;
  for (const auto& ch : rec.channels) {
    Channel c;
    c.name = ch.name;
    c.sample_rate_hz = ch.sample_rate_hz;
    const std::size_t spe = whole_samples(ch.sample_rate_hz, rec.epoch_len_s, ch.name);
    c.samples.reserve(epochs.size() * spe);
    for (auto e : epochs) {
      auto first = ch.samples.begin() + static_cast<std::ptrdiff_t>(e * spe);
      c.samples.insert(c.samples.end(), first, first + static_cast<std::ptrdiff_t>(spe));
    }
    out.channels.push_back(std::move(c));
  }
  out.labels.reserve(epochs.size());
  out.epoch_index.reserve(epochs.size());
  for (auto e : epochs) {
    out.labels.push_back(rec.labels[e]);
    out.epoch_index.push_back(rec.epoch_index[e]);
  }
  return out;
}

}  // namespace

template <typename Label>
std::vector<EpochRun> contiguous_runs(const BasicRecording<Label>& rec) {
  std::vector<EpochRun> runs;
  for (std::size_t e = 0; e < rec.n_epochs(); ++e) {
    if (runs.empty() || rec.epoch_index[e] != rec.epoch_index[e - 1] + 1) {
      runs.push_back({e, 0});
    }
    ++runs.back().count;
  }
  return runs;
}

ScoredRecording make_scored_recording(std::string id, std::vector<Channel> channels,
                                      std::vector<std::string> tokens, double epoch_len_s) {
  if (channels.empty()) throw DataError(id + ": no channels selected");
  if (!(epoch_len_s > 0)) throw DataError(id + ": epoch length must be positive");

  double max_step = 0.0, min_dur = INFINITY, max_dur = 0.0;
  for (const auto& ch : channels) {
    if (!(ch.sample_rate_hz > 0)) throw DataError(ch.name + ": sample rate must be positive");
    max_step = std::max(max_step, 1.0 / ch.sample_rate_hz);
    min_dur = std::min(min_dur, ch.duration_s());
    max_dur = std::max(max_dur, ch.duration_s());
  }
  if (max_dur - min_dur > max_step + 1e-9) {
    throw DataError(id + ": channel durations differ by more than one sample");
  }

  std::size_t n = tokens.size();
  for (const auto& ch : channels) {
    const std::size_t spe = whole_samples(ch.sample_rate_hz, epoch_len_s, ch.name);
    n = std::min(n, ch.samples.size() / spe);
  }
  for (auto& ch : channels) {
    ch.samples.resize(n * whole_samples(ch.sample_rate_hz, epoch_len_s, ch.name));
  }
  tokens.resize(n);

  ScoredRecording rec;
  rec.subject = id;
  rec.id = std::move(id);
  rec.channels = std::move(channels);
  rec.labels = std::move(tokens);
  rec.epoch_index.resize(n);
  for (std::size_t i = 0; i < n; ++i) rec.epoch_index[i] = i;
  rec.epoch_len_s = epoch_len_s;
  return rec;
}

ScoredRecording expand_epochs_20_to_30(const ScoredRecording& rec) {
  if (std::abs(rec.epoch_len_s - 20.0) > 1e-9) {
    throw DataError(rec.id + ": expansion requires 20 s epochs");
  }
  for (std::size_t e = 0; e < rec.n_epochs(); ++e) {
    if (rec.epoch_index[e] != rec.epoch_index.front() + e) {
      throw DataError(rec.id + ": expansion requires a continuous scoring");
    }
  }
  // Epoch k keeps its label; its signal window is [20k - 5, 20k + 25) s.
  std::vector<std::size_t> kept;
  for (std::size_t k = 1; k + 1 < rec.n_epochs(); ++k) kept.push_back(k);
  if (kept.empty()) {
    throw DataError(rec.id + ": recording shorter than one expanded 30 s epoch");
  }

  ScoredRecording out;
  out.id = rec.id;
  out.subject = rec.subject;
  out.lights_off_epoch = rec.lights_off_epoch;
  out.lights_on_epoch = rec.lights_on_epoch;
  out.epoch_len_s = 30.0;
  for (const auto& ch : rec.channels) {
    const std::size_t s20 = whole_samples(ch.sample_rate_hz, 20.0, ch.name);
    const std::size_t s5 = whole_samples(ch.sample_rate_hz, 5.0, ch.name);
    Channel c;
    c.name = ch.name;
    c.sample_rate_hz = ch.sample_rate_hz;
    c.samples.reserve(kept.size() * (s20 + 2 * s5));
    for (auto k : kept) {
      auto first = ch.samples.begin() + static_cast<std::ptrdiff_t>(k * s20 - s5);
      c.samples.insert(c.samples.end(), first, first + static_cast<std::ptrdiff_t>(s20 + 2 * s5));
    }
    out.channels.push_back(std::move(c));
  }
  for (auto k : kept) {
    out.labels.push_back(rec.labels[k]);
    out.epoch_index.push_back(rec.epoch_index[k]);
  }
  return out;
}

template <typename Label>
BasicRecording<Label> trim_to_in_bed(const BasicRecording<Label>& rec) {
  if (rec.lights_off_epoch && rec.lights_on_epoch &&
      *rec.lights_off_epoch > *rec.lights_on_epoch) {
    throw DataError(rec.id + ": lights_off_epoch (" + std::to_string(*rec.lights_off_epoch) +
                    ") is after lights_on_epoch (" + std::to_string(*rec.lights_on_epoch) + ")");
  }
  if (!rec.lights_off_epoch && !rec.lights_on_epoch) return rec;
  const std::size_t lo = rec.lights_off_epoch.value_or(0);
  const std::size_t hi = rec.lights_on_epoch.value_or(SIZE_MAX);
  std::vector<std::size_t> kept;
  for (std::size_t e = 0; e < rec.n_epochs(); ++e) {
    if (rec.epoch_index[e] >= lo && rec.epoch_index[e] < hi) kept.push_back(e);
  }
  return select_epochs(rec, kept);
}

namespace {

Recording map_recording_with(const ScoredRecording& rec, ScoringStandard standard) {
  auto mapping = map_stages(rec.labels, standard);
  Recording out;
  out.id = rec.id;
  out.subject = rec.subject;
  out.lights_off_epoch = rec.lights_off_epoch;
  out.lights_on_epoch = rec.lights_on_epoch;
  out.epoch_len_s = rec.epoch_len_s;
  for (const auto& ch : rec.channels) {
    const std::size_t spe = whole_samples(ch.sample_rate_hz, rec.epoch_len_s, ch.name);
    Channel c;
    c.name = ch.name;
    c.sample_rate_hz = ch.sample_rate_hz;
    c.samples.reserve(mapping.kept.size() * spe);
    for (auto e : mapping.kept) {
      auto first = ch.samples.begin() + static_cast<std::ptrdiff_t>(e * spe);
      c.samples.insert(c.samples.end(), first, first + static_cast<std::ptrdiff_t>(spe));
    }
    out.channels.push_back(std::move(c));
  }
  out.labels = std::move(mapping.labels);
  for (auto e : mapping.kept) out.epoch_index.push_back(rec.epoch_index[e]);
  return out;
}

}  // namespace

std::vector<Channel> select_channels(const std::vector<Channel>& channels,
                                     const std::vector<ChannelAlias>& wanted) {
  std::vector<Channel> out;
  for (const auto& alias : wanted) {
    const Channel* found = nullptr;
    for (const auto& name : alias.header_names) {
      auto it = std::find_if(channels.begin(), channels.end(),
                             [&](const Channel& c) { return c.name == name; });
      if (it != channels.end()) {
        found = &*it;
        break;
      }
    }
    if (!found) {
      std::string names;
      for (const auto& n : alias.header_names) names += (names.empty() ? "'" : ", '") + n + "'";
      throw DataError("no channel matches " + alias.logical + " (tried " + names + ")");
    }
    Channel c = *found;
    c.name = alias.logical;
    out.push_back(std::move(c));
  }
  return out;
}

Recording canonicalize(std::string id, const std::vector<Channel>& raw_channels,
                       const Hypnogram& hypnogram, const CanonicalizeOptions& opts) {
  std::vector<Channel> channels = opts.channels.empty()
                                      ? raw_channels
                                      : select_channels(raw_channels, opts.channels);
  for (auto& ch : channels) ch = resample_to_100hz(ch);

  auto scored = make_scored_recording(std::move(id), std::move(channels), hypnogram.tokens,
                                      hypnogram.epoch_len_s);
  if (hypnogram.subject) scored.subject = *hypnogram.subject;
  scored.lights_off_epoch = hypnogram.lights_off_epoch;
  scored.lights_on_epoch = hypnogram.lights_on_epoch;

  if (std::abs(scored.epoch_len_s - 20.0) < 1e-9) {
    scored = expand_epochs_20_to_30(scored);
  } else if (std::abs(scored.epoch_len_s - kCanonicalEpochSec) > 1e-9) {
    throw DataError(scored.id + ": unsupported epoch length " +
                    std::to_string(scored.epoch_len_s) + " s (expected 20 or 30)");
  }
  scored = trim_to_in_bed(scored);
  Recording rec = map_recording_with(scored, hypnogram.standard);
  check_canonical(rec);
  return rec;
}

Recording map_recording(const ScoredRecording& rec, ScoringStandard standard) {
  return map_recording_with(rec, standard);
}

void check_canonical(const Recording& rec) {
  if (std::abs(rec.epoch_len_s - kCanonicalEpochSec) > 1e-12) {
    throw DataError(rec.id + ": epoch length is not 30 s");
  }
  if (rec.epoch_index.size() != rec.labels.size()) {
    throw DataError(rec.id + ": epoch_index and labels differ in length");
  }
  for (const auto& ch : rec.channels) {
    if (ch.sample_rate_hz != kCanonicalRateHz) {
      throw DataError(rec.id + "/" + ch.name + ": sample rate is not 100 Hz");
    }
    if (ch.samples.size() != rec.n_epochs() * kSamplesPerEpoch) {
      throw DataError(rec.id + "/" + ch.name + ": " + std::to_string(ch.samples.size()) +
                      " samples for " + std::to_string(rec.n_epochs()) + " epochs");
    }
  }
}

std::size_t sequence_count(std::size_t n_epochs, std::size_t length, std::size_t hop) {
  if (length == 0 || hop == 0) throw ConfigError("sequence length and hop must be positive");
  if (n_epochs < length) return 0;
  return (n_epochs - length) / hop + 1;
}

std::vector<EpochSequence> sample_sequences(const Recording& rec, std::size_t recording_id,
                                            std::size_t length, std::size_t hop) {
  std::vector<EpochSequence> out;
  for (const auto& run : contiguous_runs(rec)) {
    const std::size_t n = sequence_count(run.count, length, hop);
    for (std::size_t i = 0; i < n; ++i) {
      out.push_back({recording_id, run.start + i * hop, length});
    }
  }
  return out;
}

std::span<const double> epoch_samples(const Recording& rec, std::size_t channel,
                                      std::size_t epoch) {
  const auto& s = rec.channels.at(channel).samples;
  return std::span<const double>(s).subspan(epoch * kSamplesPerEpoch, kSamplesPerEpoch);
}

template std::vector<EpochRun> contiguous_runs(const ScoredRecording&);
template std::vector<EpochRun> contiguous_runs(const Recording&);
template ScoredRecording trim_to_in_bed(const ScoredRecording&);
template Recording trim_to_in_bed(const Recording&);

}  // namespace sleeptl
