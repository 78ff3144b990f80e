// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "sleeptl/edf.hpp"
#include "sleeptl/error.hpp"
#include "sleeptl/hypnogram.hpp"
#include "sleeptl/recording.hpp"
#include "sleeptl/resample.hpp"

namespace sleeptl {
namespace {

const std::filesystem::path kData = SLEEPTL_TEST_DATA_DIR;

const nlohmann::json& expected() {
  static const nlohmann::json j = [] {
    std::ifstream in(kData / "expected.json");
    return nlohmann::json::parse(in);
  }();
  return j;
}

void expect_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], tol) << i;
}

// --- EDF ------------------------------------------------------------------------------

TEST(Edf, RampRoundTrip) {
  auto edf = read_edf(kData / "ramp.edf");
  ASSERT_EQ(edf.channels.size(), 1u);
  EXPECT_EQ(edf.channels[0].name, "ramp");
  EXPECT_DOUBLE_EQ(edf.channels[0].sample_rate_hz, 10.0);
  expect_close(edf.channels[0].samples,
               expected()["ramp"]["samples"].get<std::vector<double>>(), 1e-12);
}

TEST(Edf, CalibrationAndMixedRates) {
  auto edf = read_edf(kData / "calibrated.edf");
  const auto& exp = expected()["calibrated"];
  ASSERT_EQ(edf.channels.size(), 2u);
  EXPECT_EQ(edf.channels[0].name, "EEG Fpz-Cz");
  EXPECT_EQ(edf.channels[1].name, "Resp");
  EXPECT_DOUBLE_EQ(edf.channels[0].sample_rate_hz, 100.0);
  EXPECT_DOUBLE_EQ(edf.channels[1].sample_rate_hz, 4.0);
  expect_close(edf.channels[0].samples, exp["eeg"].get<std::vector<double>>(), 1e-9);
  expect_close(edf.channels[1].samples, exp["resp"].get<std::vector<double>>(), 1e-12);
  EXPECT_FALSE(edf.header.is_edf_plus());
  EXPECT_EQ(edf.header.n_records, 3u);
}

TEST(Edf, DegenerateCalibrationRejected) {
  try {
    read_edf(kData / "degenerate.edf");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("physical"), std::string::npos) << e.what();
  }
}

TEST(Edf, TruncatedFileRejected) {
  EXPECT_THROW(read_edf(kData / "truncated.edf"), ParseError);
}

TEST(Edf, GarbageRejected) {
  std::vector<std::byte> junk(100, std::byte{'x'});
  EXPECT_THROW(parse_edf(junk), ParseError);
  EXPECT_THROW(read_edf(kData / "does-not-exist.edf"), Error);
}

TEST(Edf, AnnotationsBecomeTokens) {
  auto edf = read_edf(kData / "annotated.edf");
  EXPECT_TRUE(edf.header.is_edf_plus());
  ASSERT_EQ(edf.channels.size(), 1u);
  EXPECT_EQ(edf.channels[0].name, "EEG");
  auto tokens = parse_hypnogram(edf.annotations, 30.0);
  EXPECT_EQ(tokens, expected()["annotated"]["tokens"].get<std::vector<std::string>>());
  auto m = map_stages(tokens, ScoringStandard::Rk);
  EXPECT_EQ(m.labels, (std::vector<StageLabel>{StageLabel::W, StageLabel::W, StageLabel::N3}));
  EXPECT_EQ(m.excluded, (std::vector<std::size_t>{3}));
}

// --- hypnograms -------------------------------------------------------------------------

TEST(Hypnogram, RkTokens) {
  auto t = parse_hypnogram("W\n1\n2\n3\n4\nR\n");
  EXPECT_EQ(t, (std::vector<std::string>{"W", "1", "2", "3", "4", "R"}));
}

TEST(Hypnogram, AasmTokensAndComments) {
  auto t = parse_hypnogram("# scored by hand\nW\nN1\n\nN2\nN3\nR");
  EXPECT_EQ(t.size(), 5u);
  EXPECT_EQ(t.back(), "R");
}

TEST(Hypnogram, EmptyRejected) {
  EXPECT_THROW(parse_hypnogram(std::string_view("")), ParseError);
  EXPECT_THROW(parse_hypnogram(std::string_view("# nothing\n\n")), ParseError);
}

TEST(Hypnogram, UnknownTokensKeptVerbatim) {
  EXPECT_EQ(parse_hypnogram("W\n?\n"), (std::vector<std::string>{"W", "?"}));
}

TEST(StageMap, RkFourMergesIntoN3) {
  auto m = map_stages({"3", "4"}, ScoringStandard::Rk);
  EXPECT_EQ(m.labels, (std::vector<StageLabel>{StageLabel::N3, StageLabel::N3}));
}

TEST(StageMap, MovementAndUnknownExcluded) {
  auto m = map_stages({"W", "MOVEMENT", "2", "UNKNOWN", "R"}, ScoringStandard::Rk);
  EXPECT_EQ(m.labels, (std::vector<StageLabel>{StageLabel::W, StageLabel::N2, StageLabel::REM}));
  EXPECT_EQ(m.excluded, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(m.kept, (std::vector<std::size_t>{0, 2, 4}));
}

TEST(StageMap, AasmIdentity) {
  auto m = map_stages({"W", "N1", "N2", "N3", "R"}, ScoringStandard::Aasm);
  EXPECT_EQ(m.labels, (std::vector<StageLabel>{StageLabel::W, StageLabel::N1, StageLabel::N2,
                                               StageLabel::N3, StageLabel::REM}));
}

TEST(StageMap, UnknownTokenNamesIndex) {
  try {
    map_stages({"W", "4"}, ScoringStandard::Aasm);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("'4'"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[1]"), std::string::npos) << msg;
  }
}

TEST(StageMap, TotalOverRkVocabulary) {
  const std::vector<std::string> vocab{"W", "1", "2", "3", "4", "R", "MOVEMENT", "UNKNOWN"};
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> tokens(1 + rng() % 40);
    for (auto& t : tokens) t = vocab[rng() % vocab.size()];
    auto m = map_stages(tokens, ScoringStandard::Rk);
    EXPECT_EQ(m.labels.size() + m.excluded.size(), tokens.size());
    for (auto s : m.labels) EXPECT_LT(index_of(s), kNumStages);
  }
}

TEST(Hypnogram, SidecarJsonRoundTrip) {
  Hypnogram h;
  h.tokens = {"W", "1", "2"};
  h.standard = ScoringStandard::Rk;
  h.lights_off_epoch = 1;
  h.epoch_len_s = 20.0;
  h.subject = "s01";
  auto back = hypnogram_from_json(hypnogram_to_json(h));
  EXPECT_EQ(back.tokens, h.tokens);
  EXPECT_EQ(back.standard, h.standard);
  EXPECT_EQ(back.lights_off_epoch, h.lights_off_epoch);
  EXPECT_FALSE(back.lights_on_epoch.has_value());
  EXPECT_EQ(back.subject, h.subject);
  EXPECT_THROW(hypnogram_from_json(nlohmann::json::parse(R"({"hypnogram": []})")), ParseError);
}

// --- epoch handling ---------------------------------------------------------------------

Channel index_channel(std::size_t n, double rate = 100.0, std::string name = "EEG") {
  Channel c;
  c.name = std::move(name);
  c.sample_rate_hz = rate;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.samples[i] = static_cast<double>(i);
  return c;
}

TEST(Expand, EpochAtHundredSecondsCoversNinetyFiveToOneTwentyFive) {
  auto rec = make_scored_recording("r", {index_channel(140 * 100)},
                                   {"W", "1", "2", "3", "4", "R", "W"}, 20.0);
  auto x = expand_epochs_20_to_30(rec);
  EXPECT_DOUBLE_EQ(x.epoch_len_s, 30.0);
  auto it = std::find(x.epoch_index.begin(), x.epoch_index.end(), 5u);
  ASSERT_NE(it, x.epoch_index.end());
  const std::size_t e = static_cast<std::size_t>(it - x.epoch_index.begin());
  EXPECT_EQ(x.labels[e], "R");
  EXPECT_EQ(x.channels[0].samples[e * 3000], 9500.0);
  EXPECT_EQ(x.channels[0].samples[e * 3000 + 2999], 12499.0);
}

TEST(Expand, ThreeEpochSignalKeepsOnlyMiddle) {
  auto rec = make_scored_recording("r", {index_channel(60 * 100)}, {"W", "1", "2"}, 20.0);
  auto x = expand_epochs_20_to_30(rec);
  ASSERT_EQ(x.n_epochs(), 1u);
  EXPECT_EQ(x.epoch_index[0], 1u);
  EXPECT_EQ(x.labels[0], "1");
  ASSERT_EQ(x.channels[0].samples.size(), 3000u);
  for (std::size_t i = 0; i < 3000; ++i) EXPECT_EQ(x.channels[0].samples[i], 1500.0 + i);
}

TEST(Expand, SingleEpochRejected) {
  auto rec = make_scored_recording("r", {index_channel(20 * 100)}, {"W"}, 20.0);
  EXPECT_THROW(expand_epochs_20_to_30(rec), DataError);
}

ScoredRecording ten_epochs() {
  std::vector<std::string> tokens(10, "W");
  return make_scored_recording("r", {index_channel(10 * 3000)}, tokens, 30.0);
}

TEST(Trim, KeepsInBedEpochs) {
  auto rec = ten_epochs();
  rec.lights_off_epoch = 2;
  rec.lights_on_epoch = 8;
  auto t = trim_to_in_bed(rec);
  EXPECT_EQ(t.n_epochs(), 6u);
  EXPECT_EQ(t.epoch_index.front(), 2u);
  EXPECT_EQ(t.channels[0].samples.size(), 6u * 3000);
  EXPECT_EQ(t.channels[0].samples.front(), 6000.0);
}

TEST(Trim, NoMarkersIsIdentity) {
  auto rec = ten_epochs();
  auto t = trim_to_in_bed(rec);
  EXPECT_EQ(t.labels, rec.labels);
  EXPECT_EQ(t.epoch_index, rec.epoch_index);
  EXPECT_EQ(t.channels[0].samples, rec.channels[0].samples);
}

TEST(Trim, InvertedMarkersRejected) {
  auto rec = ten_epochs();
  rec.lights_off_epoch = 8;
  rec.lights_on_epoch = 2;
  EXPECT_THROW(trim_to_in_bed(rec), DataError);
}

TEST(Trim, OrderInsensitiveWithMapping) {
  const std::vector<std::string> vocab{"W", "1", "2", "3", "4", "R", "MOVEMENT", "UNKNOWN"};
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng() % 12;
    std::vector<std::string> tokens(n);
    for (auto& t : tokens) t = vocab[rng() % vocab.size()];
    auto rec = make_scored_recording("r", {index_channel(n * 300, 10.0)}, tokens, 30.0);
    rec.lights_off_epoch = rng() % n;
    rec.lights_on_epoch = *rec.lights_off_epoch + rng() % (n - *rec.lights_off_epoch + 1);
    auto a = map_recording(trim_to_in_bed(rec), ScoringStandard::Rk);
    auto b = trim_to_in_bed(map_recording(rec, ScoringStandard::Rk));
    auto la = a.labels, lb = b.labels;
    std::sort(la.begin(), la.end());
    std::sort(lb.begin(), lb.end());
    EXPECT_EQ(la, lb);
    EXPECT_EQ(a.epoch_index, b.epoch_index);
  }
}

TEST(MapRecording, ExclusionCutsSignal) {
  auto rec = make_scored_recording("r", {index_channel(3 * 3000)}, {"W", "MOVEMENT", "2"}, 30.0);
  auto m = map_recording(rec, ScoringStandard::Rk);
  ASSERT_EQ(m.n_epochs(), 2u);
  EXPECT_EQ(m.channels[0].samples[3000], 6000.0);
  auto runs = contiguous_runs(m);
  ASSERT_EQ(runs.size(), 2u);
  EXPECT_EQ(runs[1].start, 1u);
}

// --- resampling ----------------------------------------------------------------------------

TEST(Resample, HalvesLength) {
  auto out = resample_to_100hz(index_channel(6000, 200.0));
  EXPECT_DOUBLE_EQ(out.sample_rate_hz, 100.0);
  EXPECT_EQ(out.samples.size(), 3000u);
}

TEST(Resample, HundredHertzIsIdentity) {
  auto in = index_channel(3000, 100.0);
  EXPECT_EQ(resample_to_100hz(in).samples, in.samples);
}

TEST(Resample, MatchesReferenceResampler) {
  const auto& r = expected()["resample"];
  const std::pair<const char*, ResampleRatio> cases[] = {
      {"200_to_100", {1, 2}}, {"256_to_100", {25, 64}}, {"50_to_100", {2, 1}}};
  for (const auto& [key, ratio] : cases) {
    SCOPED_TRACE(key);
    auto in = r[key]["input"].get<std::vector<double>>();
    expect_close(resample_poly(in, ratio), r[key]["output"].get<std::vector<double>>(), 1e-9);
  }
  EXPECT_EQ(resample_ratio(256.0, 100.0).up, 25);
  EXPECT_EQ(resample_ratio(256.0, 100.0).down, 64);
}

TEST(Resample, SinusoidAmplitudePreserved) {
  Channel c;
  c.sample_rate_hz = 200.0;
  for (std::size_t i = 0; i < 6000; ++i) {
    c.samples.push_back(std::sin(2 * std::numbers::pi * 10.0 * static_cast<double>(i) / 200.0));
  }
  auto out = resample_to_100hz(c);
  // Project onto sin/cos over whole periods to estimate the amplitude.
  double s = 0.0, c2 = 0.0;
  for (std::size_t i = 500; i < 2500; ++i) {
    const double ph = 2 * std::numbers::pi * 10.0 * static_cast<double>(i) / 100.0;
    EXPECT_NEAR(out.samples[i], std::sin(ph), 0.01);
    s += out.samples[i] * std::sin(ph);
    c2 += out.samples[i] * std::cos(ph);
  }
  EXPECT_NEAR(2.0 * std::hypot(s, c2) / 2000.0, 1.0, 0.01);
}

TEST(Resample, NonPositiveRateRejected) {
  EXPECT_THROW(resample_to_100hz(index_channel(10, 0.0)), ConfigError);
  EXPECT_THROW(resample_to_100hz(index_channel(10, -5.0)), ConfigError);
}

// --- sequences --------------------------------------------------------------------------------

Recording labelled(std::size_t n) {
  Recording r;
  r.id = "r";
  r.labels.assign(n, StageLabel::N2);
  for (std::size_t i = 0; i < n; ++i) r.epoch_index.push_back(i);
  return r;
}

TEST(Sequences, Counts) {
  EXPECT_EQ(sample_sequences(labelled(25), 0, 20, 1).size(), 6u);
  EXPECT_EQ(sample_sequences(labelled(20), 0, 20, 1).size(), 1u);
  EXPECT_EQ(sample_sequences(labelled(19), 0, 20, 1).size(), 0u);
  EXPECT_EQ(sequence_count(25, 20, 2), 3u);
  auto s = sample_sequences(labelled(25), 4, 20, 2);
  ASSERT_EQ(s.size(), 3u);
  EXPECT_EQ(s[2].source_epoch_index, 4u);
  EXPECT_EQ(s[2].recording, 4u);
  EXPECT_EQ(s[2].length, 20u);
}

TEST(Sequences, NeverCrossGaps) {
  auto r = labelled(10);
  for (std::size_t i = 5; i < 10; ++i) r.epoch_index[i] += 3;
  auto s = sample_sequences(r, 0, 3, 1);
  EXPECT_EQ(s.size(), 3u + 3u);
  for (const auto& q : s) {
    EXPECT_EQ(r.epoch_index[q.source_epoch_index + 2] - r.epoch_index[q.source_epoch_index], 2u);
  }
}

// --- canonical invariant ------------------------------------------------------------------------

TEST(Canonicalize, LengthInvariantOnRandomInputs) {
  const std::vector<std::string> rk{"W", "1", "2", "3", "4", "R", "MOVEMENT", "UNKNOWN"};
  const double rates[] = {100.0, 200.0, 50.0, 128.0, 256.0};
  std::mt19937_64 rng(1234);
  std::size_t produced = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const double rate = rates[rng() % std::size(rates)];
    const double epoch_len = rng() % 2 ? 30.0 : 20.0;
    const std::size_t n_epochs = 3 + rng() % 8;
    // Up to one epoch of unscored tail and a little jitter between channels.
    const std::size_t extra = static_cast<std::size_t>(rng() % static_cast<std::size_t>(epoch_len * rate));
    const std::size_t n = static_cast<std::size_t>(n_epochs * epoch_len * rate) + extra;
    std::vector<Channel> channels{index_channel(n, rate, "EEG"), index_channel(n, rate, "EOG")};
    Hypnogram h;
    h.standard = ScoringStandard::Rk;
    h.epoch_len_s = epoch_len;
    for (std::size_t e = 0; e < n_epochs + rng() % 2; ++e) h.tokens.push_back(rk[rng() % rk.size()]);
    if (rng() % 2) {
      h.lights_off_epoch = rng() % n_epochs;
      h.lights_on_epoch = *h.lights_off_epoch + rng() % (n_epochs - *h.lights_off_epoch + 1);
    }
    CanonicalizeOptions opts;
    if (rng() % 2) opts.channels = {{"EEG", {"EEG"}}};
    Recording rec;
    try {
      rec = canonicalize("r" + std::to_string(trial), channels, h, opts);
    } catch (const DataError&) {
      // Expansion of a too-short 20 s scoring is the only accepted failure.
      ASSERT_EQ(epoch_len, 20.0);
      continue;
    }
    ++produced;
    EXPECT_NO_THROW(check_canonical(rec));
    EXPECT_EQ(rec.channels.size(), opts.channels.empty() ? 2u : 1u);
    for (const auto& ch : rec.channels) {
      EXPECT_EQ(ch.sample_rate_hz, 100.0);
      EXPECT_EQ(ch.samples.size(), rec.n_epochs() * kSamplesPerEpoch);
    }
    EXPECT_EQ(rec.labels.size(), rec.epoch_index.size());
    EXPECT_TRUE(std::is_sorted(rec.epoch_index.begin(), rec.epoch_index.end()));
  }
  EXPECT_GT(produced, 900u);
}

TEST(Canonicalize, MissingChannelRejected) {
  Hypnogram h;
  h.tokens = {"W"};
  CanonicalizeOptions opts;
  opts.channels = {{"EMG", {"EMG submental"}}};
  EXPECT_THROW(canonicalize("r", {index_channel(3000)}, h, opts), DataError);
}

}  // namespace
}  // namespace sleeptl
