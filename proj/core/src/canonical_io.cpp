// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/canonical_io.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "binary_io.hpp"
#include "sleeptl/edf.hpp"
#include "sleeptl/error.hpp"
#include "sleeptl/hash.hpp"
#include "sleeptl/hypnogram.hpp"

namespace sleeptl {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kRecordingFormat = "sleeptl-recording";
constexpr const char* kDatasetFormat = "sleeptl-dataset";
constexpr const char* kFeatureFormat = "sleeptl-features";

json parse_json_file(const fs::path& p) {
  const std::string text = detail::read_file(p);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(p.filename().string(), e.what());
  }
}

std::vector<std::string> label_names(const std::vector<StageLabel>& labels) {
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (auto l : labels) out.emplace_back(to_string(l));
  return out;
}

std::vector<StageLabel> parse_labels(const json& j, const std::string& where) {
  std::vector<StageLabel> out;
  for (const auto& t : j) {
    auto s = parse_stage_name(t.get<std::string>());
    if (!s) throw ParseError(where, "unknown stage '" + t.get<std::string>() + "'");
    out.push_back(*s);
  }
  return out;
}

}  // namespace

Recording ingest_recording(const fs::path& edf, const fs::path& sidecar,
                           const CanonicalizeOptions& opts) {
  if (!fs::exists(sidecar)) {
    throw DataError(edf.filename().string() + ": missing sidecar " + sidecar.filename().string());
  }
  EdfContents contents = read_edf(edf);
  json doc = parse_json_file(sidecar);
  if (doc.is_object() && !doc.contains("hypnogram") && !contents.annotations.empty()) {
    doc["hypnogram"] = parse_hypnogram(contents.annotations, doc.value("epoch_len_s", 30.0));
  }
  const Hypnogram hyp = hypnogram_from_json(doc);
  return canonicalize(edf.stem().string(), contents.channels, hyp, opts);
}

CanonicalizeOptions read_dataset_options(const fs::path& dir) {
  CanonicalizeOptions opts;
  const fs::path p = dir / "channels.json";
  if (!fs::exists(p)) return opts;
  const json j = parse_json_file(p);
  try {
    for (const auto& a : j) {
      opts.channels.push_back({a.at("logical").get<std::string>(),
                               a.at("header_names").get<std::vector<std::string>>()});
    }
  } catch (const json::exception& e) {
    throw ParseError("channels.json", e.what());
  }
  return opts;
}

std::vector<Recording> ingest_dataset_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
  const auto opts = read_dataset_options(dir);
  std::vector<fs::path> edfs;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".edf") edfs.push_back(entry.path());
  }
  std::sort(edfs.begin(), edfs.end());
  if (edfs.empty()) throw DataError(dir.string() + ": no .edf files");
  std::vector<Recording> out;
  for (const auto& edf : edfs) {
    out.push_back(ingest_recording(edf, dir / (edf.stem().string() + ".hyp.json"), opts));
  }
  return out;
}

void save_recording(const Recording& rec, const fs::path& dir) {
  check_canonical(rec);
  fs::create_directories(dir);
  std::string blob;
  std::vector<std::string> names;
  for (const auto& ch : rec.channels) {
    names.push_back(ch.name);
    detail::append_f64(blob, ch.samples);
  }
  json m = {{"format", kRecordingFormat},
            {"version", 1},
            {"id", rec.id},
            {"subject", rec.subject},
            {"channels", names},
            {"sample_rate_hz", kCanonicalRateHz},
            {"epoch_len_s", rec.epoch_len_s},
            {"shape", {rec.channels.size(), rec.n_epochs() * kSamplesPerEpoch}},
            {"labels", label_names(rec.labels)},
            {"epoch_index", rec.epoch_index},
            {"data", rec.id + ".f64"},
            {"sha256", sha256_hex(blob)}};
  m["lights_off_epoch"] = rec.lights_off_epoch ? json(*rec.lights_off_epoch) : json(nullptr);
  m["lights_on_epoch"] = rec.lights_on_epoch ? json(*rec.lights_on_epoch) : json(nullptr);
  detail::write_file(dir / (rec.id + ".f64"), blob);
  detail::write_file(dir / (rec.id + ".json"), m.dump(2) + "\n");
}

Recording load_recording(const fs::path& manifest) {
  const json m = parse_json_file(manifest);
  if (m.value("format", "") != kRecordingFormat) {
    throw ParseError(manifest.filename().string(), "not a canonical recording manifest");
  }
  Recording rec;
  try {
    rec.id = m.at("id").get<std::string>();
    rec.subject = m.value("subject", rec.id);
    rec.epoch_len_s = m.at("epoch_len_s").get<double>();
    rec.labels = parse_labels(m.at("labels"), "labels");
    rec.epoch_index = m.at("epoch_index").get<std::vector<std::size_t>>();
    if (!m.at("lights_off_epoch").is_null()) rec.lights_off_epoch = m.at("lights_off_epoch").get<std::size_t>();
    if (!m.at("lights_on_epoch").is_null()) rec.lights_on_epoch = m.at("lights_on_epoch").get<std::size_t>();
    const auto names = m.at("channels").get<std::vector<std::string>>();
    const auto shape = m.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2 || shape[0] != names.size()) {
      throw ParseError("shape", "does not match the channel list");
    }
    const std::string blob = detail::read_file(manifest.parent_path() / m.at("data").get<std::string>());
    if (sha256_hex(blob) != m.at("sha256").get<std::string>()) {
      throw ParseError("sha256", rec.id + ": signal file does not match its manifest digest");
    }
    if (blob.size() != shape[0] * shape[1] * 8) throw ParseError("data", rec.id + ": signal file has the wrong size");
    for (std::size_t c = 0; c < names.size(); ++c) {
      Channel ch;
      ch.name = names[c];
      ch.sample_rate_hz = m.at("sample_rate_hz").get<double>();
      ch.samples = detail::decode_f64(blob.data() + c * shape[1] * 8, shape[1]);
      rec.channels.push_back(std::move(ch));
    }
  } catch (const json::exception& e) {
    throw ParseError(manifest.filename().string(), e.what());
  }
  check_canonical(rec);
  return rec;
}

void save_dataset(const std::vector<Recording>& recs, const fs::path& dir) {
  fs::create_directories(dir);
  json list = json::array();
  for (const auto& r : recs) {
    save_recording(r, dir);
    list.push_back({{"id", r.id}, {"subject", r.subject}, {"manifest", r.id + ".json"},
                    {"digest", recording_digest(r)}});
  }
  const json index = {{"format", kDatasetFormat}, {"version", 1}, {"recordings", list}};
  detail::write_file(dir / "index.json", index.dump(2) + "\n");
}

std::vector<Recording> load_dataset(const fs::path& dir) {
  const json index = parse_json_file(dir / "index.json");
  if (index.value("format", "") != kDatasetFormat) throw ParseError("index.json", "not a canonical dataset");
  std::vector<Recording> out;
  try {
    for (const auto& r : index.at("recordings")) {
      out.push_back(load_recording(dir / r.at("manifest").get<std::string>()));
    }
  } catch (const json::exception& e) {
    throw ParseError("index.json", e.what());
  }
  return out;
}

std::string recording_digest(const Recording& rec) {
  std::string bytes = rec.id + '\0' + rec.subject + '\0';
  for (auto l : rec.labels) bytes.push_back(static_cast<char>(index_of(l)));
  for (auto i : rec.epoch_index) bytes += std::to_string(i) + ',';
  for (const auto& ch : rec.channels) {
    bytes += ch.name + '\0';
    detail::append_f64(bytes, ch.samples);
  }
  return sha256_hex(bytes);
}

PreparedRecording prepare_cached(const Recording& rec, InputKind kind, const StftParams& stft,
                                 const std::optional<fs::path>& cache_dir) {
  if (!cache_dir) return prepare_recording(rec, kind, stft);
  const std::string key =
      sha256_hex(recording_digest(rec) + to_string(kind) + to_json(stft).dump()).substr(0, 32);
  const fs::path manifest = *cache_dir / (rec.id + "." + key + ".json");
  const fs::path data = *cache_dir / (rec.id + "." + key + ".f64");
  if (fs::exists(manifest) && fs::exists(data)) {
    const json m = parse_json_file(manifest);
    const std::string blob = detail::read_file(data);
    if (m.value("format", "") == kFeatureFormat && m.value("sha256", "") == sha256_hex(blob)) {
      PreparedRecording p;
      p.id = rec.id;
      p.subject = rec.subject.empty() ? rec.id : rec.subject;
      p.kind = kind;
      p.labels = rec.labels;
      p.epoch_index = rec.epoch_index;
      p.channel_names = m.at("channels").get<std::vector<std::string>>();
      p.channels = p.channel_names.size();
      p.frames = m.at("frames").get<std::size_t>();
      p.bins = m.at("bins").get<std::size_t>();
      p.samples = m.at("samples").get<std::size_t>();
      p.data = detail::decode_f64(blob.data(), blob.size() / 8);
      if (p.data.size() == p.n_epochs() * p.epoch_size()) return p;
    }
  }
  PreparedRecording p = prepare_recording(rec, kind, stft);
  fs::create_directories(*cache_dir);
  std::string blob;
  detail::append_f64(blob, p.data);
  const json m = {{"format", kFeatureFormat},
                  {"version", 1},
                  {"recording", rec.id},
                  {"recording_digest", recording_digest(rec)},
                  {"kind", to_string(kind)},
                  {"stft", to_json(stft)},
                  {"channels", p.channel_names},
                  {"frames", p.frames},
                  {"bins", p.bins},
                  {"samples", p.samples},
                  {"normalized", false},
                  {"sha256", sha256_hex(blob)}};
  detail::write_file(data, blob);
  detail::write_file(manifest, m.dump(2) + "\n");
  return p;
}

}  // namespace sleeptl
