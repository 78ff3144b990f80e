// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/checkpoint.hpp"


#include "binary_io.hpp"
#include "sleeptl/error.hpp"
#include "sleeptl/hash.hpp"

namespace sleeptl {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "sleeptl-checkpoint";
constexpr int kVersion = 1;

}  // namespace

json to_json(const InputPipeline& p) {
  json j = {{"kind", to_string(p.kind)}, {"channels", p.channels}, {"stft", to_json(p.stft)}};
  j["normalization"] = p.normalization ? to_json(*p.normalization) : json(nullptr);
  return j;
}

InputPipeline input_pipeline_from_json(const json& j) {
  InputPipeline p;
  try {
    p.kind = parse_input_kind(j.at("kind").get<std::string>());
    p.channels = j.at("channels").get<std::vector<std::string>>();
    p.stft = stft_params_from_json(j.at("stft"));
    if (j.contains("normalization") && !j.at("normalization").is_null()) {
      p.normalization = normalization_from_json(j.at("normalization"));
    }
  } catch (const json::exception& e) {
    throw ParseError("pipeline", e.what());
  }
  return p;
}

Checkpoint capture_checkpoint(const SequenceModel& model, InputPipeline pipeline,
                              Provenance provenance) {
  Checkpoint c;
  c.config = model.config();
  c.pipeline = std::move(pipeline);
  c.provenance = std::move(provenance);
  for (const auto& e : model.params().entries()) {
    c.tensors.push_back({e.name, e.group, e.kind, e.tensor.shape(),
                         {e.tensor.data().begin(), e.tensor.data().end()}});
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& dir) {
  fs::create_directories(dir);
  std::string blob;
  json params = json::array();
  std::size_t offset = 0;
  for (const auto& t : ckpt.tensors) {
    params.push_back({{"name", t.name},
                      {"group", to_string(t.group)},
                      {"kind", to_string(t.kind)},
                      {"shape", t.shape},
                      {"offset", offset},
                      {"count", t.values.size()}});
    detail::append_f64(blob, t.values);
    offset += t.values.size();
  }
  json manifest = {
      {"format", kFormat},
      {"version", kVersion},
      {"config", to_json(ckpt.config)},
      {"config_hash", config_hash(ckpt.config)},
      {"pipeline", to_json(ckpt.pipeline)},
      {"provenance",
       {{"source_domain", ckpt.provenance.source_domain},
        {"steps", ckpt.provenance.steps},
        {"seed", ckpt.provenance.seed},
        {"note", ckpt.provenance.note}}},
      {"blob", "params.bin"},
      {"blob_sha256", sha256_hex(blob)},
      {"parameters", params},
  };
  detail::write_file(dir / "params.bin", blob);
  detail::write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  const auto manifest_bytes = detail::read_file(dir / "manifest.json");
  json m;
  try {
    m = json::parse(manifest_bytes.begin(), manifest_bytes.end());
  } catch (const json::exception& e) {
    throw ParseError("manifest.json", e.what());
  }
  if (m.value("format", "") != kFormat) throw ParseError("format", "not a sleeptl checkpoint");
  if (m.value("version", 0) != kVersion) {
    throw ParseError("version", "unsupported checkpoint version");
  }
  const auto blob = detail::read_file(dir / m.value("blob", "params.bin"));
  if (sha256_hex(std::string_view(blob.data(), blob.size())) != m.value("blob_sha256", "")) {
    throw ParseError("blob_sha256", "parameter blob does not match its manifest digest");
  }

  Checkpoint c;
  c.config = model_config_from_json(m.at("config"));
  if (config_hash(c.config) != m.value("config_hash", "")) {
    throw ParseError("config_hash", "stored hash does not match the stored config");
  }
  c.pipeline = input_pipeline_from_json(m.at("pipeline"));
  try {
    const auto& p = m.at("provenance");
    c.provenance.source_domain = p.value("source_domain", "");
    c.provenance.steps = p.value("steps", std::size_t{0});
    c.provenance.seed = p.value("seed", std::uint64_t{0});
    c.provenance.note = p.value("note", "");
    for (const auto& e : m.at("parameters")) {
      CheckpointTensor t;
      t.name = e.at("name").get<std::string>();
      t.group = parse_param_group(e.at("group").get<std::string>());
      t.kind = parse_param_kind(e.at("kind").get<std::string>());
      t.shape = e.at("shape").get<ad::Shape>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      if (count != ad::shape_numel(t.shape) || (offset + count) * 8 > blob.size()) {
        throw ParseError("parameters", "entry '" + t.name + "' is inconsistent with the blob");
      }
      t.values = detail::decode_f64(blob.data() + offset * 8, count);
      c.tensors.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw ParseError("manifest.json", e.what());
  }
  return c;
}

std::string checkpoint_hash(const fs::path& dir) {
  return sha256_hex(sha256_file(dir / "manifest.json") + sha256_file(dir / "params.bin"));
}

std::string checkpoint_digest(const Checkpoint& ckpt) {
  std::string bytes = config_hash(ckpt.config);
  for (const auto& t : ckpt.tensors) {
    bytes += t.name;
    bytes.push_back('\0');
    detail::append_f64(bytes, t.values);
  }
  return sha256_hex(bytes);
}

void restore_into(SequenceModel& model, const Checkpoint& ckpt) {
  auto& store = model.params();
  std::vector<std::string> problems;
  std::vector<const CheckpointTensor*> matched;
  for (const auto& e : store.entries()) {
    const CheckpointTensor* found = nullptr;
    for (const auto& t : ckpt.tensors) {
      if (t.name == e.name) found = &t;
    }
    if (!found) {
      problems.push_back(e.name + " (absent from checkpoint)");
    } else if (found->shape != e.tensor.shape()) {
      problems.push_back(e.name + " (checkpoint " + ad::shape_str(found->shape) + ", model " +
                         ad::shape_str(e.tensor.shape()) + ")");
    }
    matched.push_back(found);
  }
  for (const auto& t : ckpt.tensors) {
    if (!store.contains(t.name)) problems.push_back(t.name + " (absent from model)");
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint is incompatible with the model; parameters:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw ShapeError(msg);
  }
  std::vector<std::vector<double>> values;
  for (const auto* t : matched) values.push_back(t->values);
  store.assign_values(values);
}

std::unique_ptr<SequenceModel> instantiate(const Checkpoint& ckpt) {
  auto model = build_model(ckpt.config, 0);
  restore_into(*model, ckpt);
  return model;
}

}  // namespace sleeptl
