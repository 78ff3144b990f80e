// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/synthdomain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "fft_plans.hpp"
#include "json_fields.hpp"
#include "sleeptl/error.hpp"

namespace sleeptl {

using json = nlohmann::json;

namespace {

enum class Modality { EEG, EOG, EMG };

Modality modality_of(const std::string& name) {
  if (name == "EEG") return Modality::EEG;
  if (name == "EOG") return Modality::EOG;
  if (name == "EMG") return Modality::EMG;
  throw ConfigError("synth.channels: unknown channel '" + name + "'");
}

const std::vector<SpectralBand>& bands_of(const ClassTemplate& t, Modality m) {
  switch (m) {
    case Modality::EOG: return t.eog;
    case Modality::EMG: return t.emg;
    default: return t.eeg;
  }
}

json bands_to_json(const std::vector<SpectralBand>& bands) {
  json arr = json::array();
  for (const auto& b : bands) arr.push_back({{"center_hz", b.center_hz}, {"width_hz", b.width_hz}, {"power", b.power}});
  return arr;
}

std::vector<SpectralBand> bands_from_json(const json& j, const std::string& where) {
  std::vector<SpectralBand> out;
  if (!j.is_array()) throw ConfigError(where + ": expected an array");
  for (const auto& b : j) {
    detail::check_keys(b, {"center_hz", "width_hz", "power"}, where);
    SpectralBand band;
    detail::read_opt(b, "center_hz", band.center_hz, where);
    detail::read_opt(b, "width_hz", band.width_hz, where);
    detail::read_opt(b, "power", band.power, where);
    out.push_back(band);
  }
  return out;
}

}  // namespace

void DomainSpec::validate() const {
  if (n_subjects == 0 || epochs_per_subject == 0) {
    throw ConfigError("synth: n_subjects and epochs_per_subject must be positive");
  }
  double total = 0.0;
  std::size_t nonzero = 0;
  for (double p : priors) {
    if (!std::isfinite(p) || p < 0) throw ConfigError("synth.priors: entries must be non-negative");
    total += p;
    nonzero += p > 0 ? 1 : 0;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("synth.priors: must sum to 1");
  if (nonzero < 2) throw ConfigError("synth.priors: at least two stages need positive mass");
  if (!(persistence >= 0 && persistence < 1)) throw ConfigError("synth.persistence must be in [0, 1)");
  if (channels.empty()) throw ConfigError("synth.channels: empty");
  int last = -1;
  for (const auto& c : channels) {
    const int m = static_cast<int>(modality_of(c));
    if (m <= last) throw ConfigError("synth.channels: must be a subsequence of EEG, EOG, EMG");
    last = m;
  }
  if (!(device.gain > 0) || !(device.tilt_ref_hz > 0) || device.noise_std < 0) {
    throw ConfigError("synth.device: gain and tilt_ref_hz must be positive, noise_std non-negative");
  }
  if (floor_power < 0 || subject_jitter < 0) throw ConfigError("synth: negative floor or jitter");
  for (const auto& t : templates) {
    for (const auto* bands : {&t.eeg, &t.eog, &t.emg}) {
      for (const auto& b : *bands) {
        if (!(b.width_hz > 0) || b.power < 0) throw ConfigError("synth.templates: bad band");
      }
    }
  }
}

DomainSpec default_domain_spec() {
  DomainSpec s;
  auto& t = s.templates;
  t[index_of(StageLabel::W)] = {{{10.0, 1.5, 0.6}, {20.0, 4.0, 0.15}},
                                {{0.6, 0.4, 1.0}},
                                {{30.0, 10.0, 0.3}}};
  t[index_of(StageLabel::N1)] = {{{6.0, 1.5, 0.5}, {10.0, 1.5, 0.1}},
                                 {{0.4, 0.3, 0.4}},
                                 {{30.0, 10.0, 0.15}}};
  t[index_of(StageLabel::N2)] = {{{13.0, 1.0, 0.5}, {5.0, 1.5, 0.3}, {2.0, 1.0, 0.3}},
                                 {{0.3, 0.3, 0.2}},
                                 {{30.0, 10.0, 0.1}}};
  t[index_of(StageLabel::N3)] = {{{1.5, 0.8, 2.0}},
                                 {{0.3, 0.3, 0.3}},
                                 {{30.0, 10.0, 0.08}}};
  t[index_of(StageLabel::REM)] = {{{7.0, 2.0, 0.4}, {18.0, 4.0, 0.15}},
                                  {{1.0, 0.5, 1.5}},
                                  {{30.0, 10.0, 0.02}}};
  return s;
}

json to_json(const DomainSpec& s) {
  json templates = json::object();
  for (std::size_t k = 0; k < kNumStages; ++k) {
    const auto& t = s.templates[k];
    templates[std::string(to_string(stage_from_index(k)))] = {
        {"eeg", bands_to_json(t.eeg)}, {"eog", bands_to_json(t.eog)}, {"emg", bands_to_json(t.emg)}};
  }
  return {{"name", s.name},
          {"n_subjects", s.n_subjects},
          {"epochs_per_subject", s.epochs_per_subject},
          {"priors", s.priors},
          {"persistence", s.persistence},
          {"templates", templates},
          {"floor_power", s.floor_power},
          {"channels", s.channels},
          {"device",
           {{"gain", s.device.gain},
            {"tilt_db_per_decade", s.device.tilt_db_per_decade},
            {"tilt_ref_hz", s.device.tilt_ref_hz},
            {"noise_std", s.device.noise_std}}},
          {"subject_jitter", s.subject_jitter},
          {"seed", s.seed}};
}

DomainSpec domain_spec_from_json(const json& j) {
  const std::string w = "synth";
  detail::check_keys(j, {"name", "n_subjects", "epochs_per_subject", "priors", "persistence",
                         "templates", "floor_power", "channels", "device", "subject_jitter", "seed"},
                     w);
  DomainSpec s = default_domain_spec();
  detail::read_opt(j, "name", s.name, w);
  detail::read_opt(j, "n_subjects", s.n_subjects, w);
  detail::read_opt(j, "epochs_per_subject", s.epochs_per_subject, w);
  detail::read_opt(j, "priors", s.priors, w);
  detail::read_opt(j, "persistence", s.persistence, w);
  detail::read_opt(j, "floor_power", s.floor_power, w);
  detail::read_opt(j, "channels", s.channels, w);
  detail::read_opt(j, "subject_jitter", s.subject_jitter, w);
  detail::read_opt(j, "seed", s.seed, w);
  if (j.contains("device")) {
    const auto& d = j.at("device");
    const std::string wd = w + ".device";
    detail::check_keys(d, {"gain", "tilt_db_per_decade", "tilt_ref_hz", "noise_std"}, wd);
    detail::read_opt(d, "gain", s.device.gain, wd);
    detail::read_opt(d, "tilt_db_per_decade", s.device.tilt_db_per_decade, wd);
    detail::read_opt(d, "tilt_ref_hz", s.device.tilt_ref_hz, wd);
    detail::read_opt(d, "noise_std", s.device.noise_std, wd);
  }
  if (j.contains("templates")) {
    const auto& t = j.at("templates");
    detail::check_keys(t, {"W", "N1", "N2", "N3", "REM"}, w + ".templates");
    for (const auto& [stage, value] : t.items()) {
      const std::string wt = w + ".templates." + stage;
      detail::check_keys(value, {"eeg", "eog", "emg"}, wt);
      auto& tpl = s.templates[index_of(*parse_stage_name(stage))];
      if (value.contains("eeg")) tpl.eeg = bands_from_json(value.at("eeg"), wt + ".eeg");
      if (value.contains("eog")) tpl.eog = bands_from_json(value.at("eog"), wt + ".eog");
      if (value.contains("emg")) tpl.emg = bands_from_json(value.at("emg"), wt + ".emg");
    }
  }
  s.validate();
  return s;
}

std::vector<Recording> generate_domain(const DomainSpec& spec) {
  spec.validate();
  constexpr std::size_t n = kSamplesPerEpoch;
  constexpr std::size_t bins = n / 2 + 1;
  const double df = kCanonicalRateHz / static_cast<double>(n);
  // Scales the inverse transform so that signal variance equals the
  // integral of the PSD over [0, rate / 2].
  const double out_scale = std::sqrt(kCanonicalRateHz / 4.0) / std::sqrt(static_cast<double>(n));

  std::vector<double> device_amp(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    const double f = std::max(static_cast<double>(k) * df, df);
    const double tilt_db = spec.device.tilt_db_per_decade * std::log10(f / spec.device.tilt_ref_hz);
    device_amp[k] = spec.device.gain * std::pow(10.0, tilt_db / 20.0);
  }

  std::discrete_distribution<std::size_t> prior_draw(spec.priors.begin(), spec.priors.end());
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto spec_buf = detail::fftw_complex_buf(bins);
  auto time_buf = detail::fftw_real(n);

  std::vector<Recording> out;
  for (std::size_t subj = 0; subj < spec.n_subjects; ++subj) {
    std::seed_seq seq{spec.seed, static_cast<std::uint64_t>(subj), std::uint64_t{0x5eed}};
    std::mt19937_64 rng(seq);

    Recording rec;
    rec.id = spec.name + "-" + std::to_string(subj);
    rec.subject = rec.id;

    // Subject-specific amplitude and band shifts, one set per stage and channel.
    std::vector<std::array<std::vector<double>, kNumStages>> psd(spec.channels.size());
    for (std::size_t c = 0; c < spec.channels.size(); ++c) {
      const Modality m = modality_of(spec.channels[c]);
      const double amp = std::exp(spec.subject_jitter * normal(rng));
      for (std::size_t s = 0; s < kNumStages; ++s) {
        auto& p = psd[c][s];
        p.assign(bins, spec.floor_power);
        for (const auto& b : bands_of(spec.templates[s], m)) {
          const double center = b.center_hz * (1.0 + spec.subject_jitter * normal(rng));
          for (std::size_t k = 0; k < bins; ++k) {
            const double z = (static_cast<double>(k) * df - center) / b.width_hz;
            p[k] += b.power * std::exp(-0.5 * z * z);
          }
        }
        for (auto& v : p) v *= amp * amp;
      }
    }

    std::size_t prev = prior_draw(rng);
    for (std::size_t e = 0; e < spec.epochs_per_subject; ++e) {
      const std::size_t stage = e == 0 || unit(rng) >= spec.persistence ? prior_draw(rng) : prev;
      prev = stage;
      rec.labels.push_back(stage_from_index(stage));
      rec.epoch_index.push_back(e);
    }

    for (std::size_t c = 0; c < spec.channels.size(); ++c) {
      Channel ch;
      ch.name = spec.channels[c];
      ch.sample_rate_hz = kCanonicalRateHz;
      ch.samples.reserve(spec.epochs_per_subject * n);
      for (std::size_t e = 0; e < spec.epochs_per_subject; ++e) {
        const auto& p = psd[c][index_of(rec.labels[e])];
        for (std::size_t k = 0; k < bins; ++k) {
          const double a = std::sqrt(p[k]) * device_amp[k];
          spec_buf.get()[k][0] = a * normal(rng);
          spec_buf.get()[k][1] = (k == 0 || k == bins - 1) ? 0.0 : a * normal(rng);
        }
        detail::execute_c2r(n, spec_buf.get(), time_buf.get());
        for (std::size_t i = 0; i < n; ++i) {
          double v = time_buf.get()[i] * out_scale;
          if (spec.device.noise_std > 0) v += spec.device.noise_std * normal(rng);
          ch.samples.push_back(v);
        }
      }
      rec.channels.push_back(std::move(ch));
    }
    check_canonical(rec);
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<DomainSpec> mismatch_ladder(const DomainSpec& base, const std::vector<double>& levels,
                                        const MismatchStep& step) {
  if (!(step.gain_ratio > 0)) throw ConfigError("mismatch step gain_ratio must be positive");
  std::vector<DomainSpec> out;
  for (double level : levels) {
    if (!(level >= 0)) throw ConfigError("mismatch levels must be non-negative");
    DomainSpec s = base;
    s.device.gain = base.device.gain * std::pow(step.gain_ratio, level);
    s.device.tilt_db_per_decade = base.device.tilt_db_per_decade + level * step.tilt_db_per_decade;
    s.device.noise_std = base.device.noise_std + level * step.noise_std;
    out.push_back(std::move(s));
  }
  return out;
}

double transfer_distance(const DeviceTransfer& a, const DeviceTransfer& b) {
  return std::abs(20.0 * std::log10(a.gain / b.gain)) +
         std::abs(a.tilt_db_per_decade - b.tilt_db_per_decade) +
         10.0 * std::abs(a.noise_std - b.noise_std);
}

}  // namespace sleeptl
