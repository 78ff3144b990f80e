// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/dataset.hpp"

#include <algorithm>
#include <set>

#include "sleeptl/error.hpp"

namespace sleeptl {

std::size_t PreparedRecording::epoch_size() const {
  return kind == InputKind::Spectrogram ? frames * bins * channels : channels * samples;
}

std::span<const double> PreparedRecording::epoch(std::size_t e) const {
  const std::size_t n = epoch_size();
  return std::span<const double>(data).subspan(e * n, n);
}

EpochImage PreparedRecording::image(std::size_t e) const {
  if (kind != InputKind::Spectrogram) throw ShapeError(id + ": recording holds raw epochs");
  EpochImage img;
  img.frames = frames;
  img.bins = bins;
  img.channels = channels;
  auto src = epoch(e);
  img.data.assign(src.begin(), src.end());
  return img;
}

std::vector<EpochRun> PreparedRecording::runs() const {
  std::vector<EpochRun> out;
  for (std::size_t e = 0; e < epoch_index.size(); ++e) {
    if (e == 0 || epoch_index[e] != epoch_index[e - 1] + 1) out.push_back({e, 0});
    ++out.back().count;
  }
  return out;
}

PreparedRecording prepare_recording(const Recording& rec, InputKind kind,
                                    const StftParams& stft) {
  check_canonical(rec);
  PreparedRecording out;
  out.id = rec.id;
  out.subject = rec.subject.empty() ? rec.id : rec.subject;
  out.kind = kind;
  out.labels = rec.labels;
  out.epoch_index = rec.epoch_index;
  out.channels = rec.channels.size();
  for (const auto& ch : rec.channels) out.channel_names.push_back(ch.name);
  if (out.channels == 0) throw DataError(rec.id + ": recording has no channels");
  const std::size_t n_epochs = rec.n_epochs();

  if (kind == InputKind::Raw) {
    out.samples = kSamplesPerEpoch;
    out.data.resize(n_epochs * out.channels * out.samples);
    for (std::size_t e = 0; e < n_epochs; ++e) {
      for (std::size_t c = 0; c < out.channels; ++c) {
        auto src = epoch_samples(rec, c, e);
        std::copy(src.begin(), src.end(),
                  out.data.begin() + static_cast<std::ptrdiff_t>((e * out.channels + c) * out.samples));
      }
    }
    return out;
  }

  out.frames = stft.n_frames(kSamplesPerEpoch);
  out.bins = stft.n_bins();
  out.data.reserve(n_epochs * out.epoch_size());
  for (std::size_t e = 0; e < n_epochs; ++e) {
    std::vector<EpochImage> per_channel;
    for (std::size_t c = 0; c < out.channels; ++c) {
      per_channel.push_back(stft_log_power(epoch_samples(rec, c, e), stft));
    }
    auto img = stack_channels(per_channel);
    out.data.insert(out.data.end(), img.data.begin(), img.data.end());
  }
  return out;
}

Recording select_recording_channels(const Recording& rec, const std::vector<std::string>& names) {
  Recording out = rec;
  out.channels.clear();
  for (const auto& name : names) {
    auto it = std::find_if(rec.channels.begin(), rec.channels.end(),
                           [&](const Channel& c) { return c.name == name; });
    if (it == rec.channels.end()) {
      throw DataError(rec.id + ": no channel named '" + name + "'");
    }
    out.channels.push_back(*it);
  }
  return out;
}

NormalizationStats fit_normalization(const std::vector<PreparedRecording>& recordings,
                                     std::string_view split) {
  NormalizationAccumulator acc;
  for (const auto& r : recordings) {
    if (r.kind != InputKind::Spectrogram) throw ShapeError(r.id + ": not a spectrogram recording");
    for (std::size_t e = 0; e < r.n_epochs(); ++e) acc.add(r.image(e));
  }
  return acc.finish(split);
}

void normalize_in_place(PreparedRecording& rec, const NormalizationStats& stats) {
  if (rec.kind != InputKind::Spectrogram) return;
  if (rec.bins != stats.bins || rec.channels != stats.channels) {
    throw ShapeError(rec.id + ": normalization statistics do not match the feature shape");
  }
  const std::size_t cell = stats.mean.size();
  for (std::size_t row = 0; row < rec.data.size() / cell; ++row) {
    double* v = rec.data.data() + row * cell;
    for (std::size_t k = 0; k < cell; ++k) v[k] = (v[k] - stats.mean[k]) / stats.std[k];
  }
}

std::vector<SequenceRef> enumerate_sequences(const std::vector<PreparedRecording>& recs,
                                             std::size_t seq_len, std::size_t hop) {
  if (seq_len == 0 || hop == 0) throw ConfigError("sequence length and hop must be positive");
  std::vector<SequenceRef> out;
  for (std::size_t r = 0; r < recs.size(); ++r) {
    for (const auto& run : recs[r].runs()) {
      const std::size_t n = sequence_count(run.count, seq_len, hop);
      for (std::size_t i = 0; i < n; ++i) out.push_back({r, run.start + i * hop});
    }
  }
  return out;
}

namespace {

template <typename Lookup>
Batch make_batch_impl(Lookup recs, std::span<const SequenceRef> seqs, std::size_t seq_len) {
  if (seqs.empty()) throw DataError("make_batch: no sequences");
  const auto& first = recs(seqs.front().recording);
  const std::size_t b_count = seqs.size();
  const std::size_t e_count = b_count * seq_len;
  for (const auto& s : seqs) {
    const auto& r = recs(s.recording);
    if (r.kind != first.kind || r.epoch_size() != first.epoch_size() ||
        r.channels != first.channels) {
      throw ShapeError("make_batch: recordings " + first.id + " and " + r.id +
                       " have different feature shapes");
    }
    if (s.start + seq_len > r.n_epochs()) {
      throw DataError("make_batch: sequence at " + std::to_string(s.start) + " overruns " + r.id);
    }
  }

  Batch batch;
  batch.input.batch = b_count;
  batch.input.seq_len = seq_len;
  std::vector<double> targets(e_count * kNumStages, 0.0);
  batch.labels.resize(e_count);
  for (std::size_t l = 0; l < seq_len; ++l) {
    for (std::size_t b = 0; b < b_count; ++b) {
      const std::size_t e = l * b_count + b;
      const StageLabel y = recs(seqs[b].recording).labels[seqs[b].start + l];
      batch.labels[e] = y;
      targets[e * kNumStages + index_of(y)] = 1.0;
    }
  }
  batch.targets = ad::Tensor::from_data({e_count, kNumStages}, std::move(targets));

  if (first.kind == InputKind::Raw) {
    const std::size_t n = first.epoch_size();
    std::vector<double> x(e_count * n);
    for (std::size_t l = 0; l < seq_len; ++l) {
      for (std::size_t b = 0; b < b_count; ++b) {
        auto src = recs(seqs[b].recording).epoch(seqs[b].start + l);
        std::copy(src.begin(), src.end(), x.begin() + static_cast<std::ptrdiff_t>((l * b_count + b) * n));
      }
    }
    batch.input.x = ad::Tensor::from_data({e_count, first.channels, first.samples}, std::move(x));
    return batch;
  }

  const std::size_t T = first.frames, F = first.bins, C = first.channels;
  std::vector<double> x(C * T * e_count * F);
  for (std::size_t l = 0; l < seq_len; ++l) {
    for (std::size_t b = 0; b < b_count; ++b) {
      const std::size_t e = l * b_count + b;
      auto src = recs(seqs[b].recording).epoch(seqs[b].start + l);
      for (std::size_t t = 0; t < T; ++t) {
        for (std::size_t f = 0; f < F; ++f) {
          for (std::size_t c = 0; c < C; ++c) {
            x[((c * T + t) * e_count + e) * F + f] = src[(t * F + f) * C + c];
          }
        }
      }
    }
  }
  batch.input.x = ad::Tensor::from_data({C, T * e_count, F}, std::move(x));
  return batch;
}

}  // namespace

Batch make_batch(const std::vector<PreparedRecording>& recs, std::span<const SequenceRef> seqs,
                 std::size_t seq_len) {
  return make_batch_impl(
      [&](std::size_t r) -> const PreparedRecording& { return recs.at(r); }, seqs, seq_len);
}

Batch make_batch(const PreparedRecording& rec, std::span<const std::size_t> starts,
                 std::size_t seq_len) {
  std::vector<SequenceRef> seqs;
  seqs.reserve(starts.size());
  for (std::size_t s : starts) seqs.push_back({0, s});
  return make_batch_impl([&](std::size_t) -> const PreparedRecording& { return rec; }, seqs,
                         seq_len);
}

namespace {

template <typename R>
std::vector<std::string> subjects_impl(const std::vector<R>& recs) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : recs) {
    const std::string s = r.subject.empty() ? r.id : r.subject;
    if (seen.insert(s).second) out.push_back(s);
  }
  return out;
}

}  // namespace

std::vector<std::string> subjects_of(const std::vector<PreparedRecording>& recs) {
  return subjects_impl(recs);
}

std::vector<std::string> subjects_of(const std::vector<Recording>& recs) {
  return subjects_impl(recs);
}

template <typename R>
std::vector<R> filter_subjects(const std::vector<R>& recs,
                               const std::vector<std::string>& subjects) {
  std::set<std::string> keep(subjects.begin(), subjects.end());
  std::vector<R> out;
  for (const auto& r : recs) {
    if (keep.count(r.subject.empty() ? r.id : r.subject)) out.push_back(r);
  }
  return out;
}

template std::vector<PreparedRecording> filter_subjects(const std::vector<PreparedRecording>&,
                                                        const std::vector<std::string>&);
template std::vector<Recording> filter_subjects(const std::vector<Recording>&,
                                                const std::vector<std::string>&);

}  // namespace sleeptl
