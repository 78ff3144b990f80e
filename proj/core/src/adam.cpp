// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/adam.hpp"

#include <cmath>

#include "sleeptl/error.hpp"

namespace sleeptl {

Adam::Adam(ParameterStore& store, AdamConfig config) : store_(store), config_(config) {
  if (!(config.lr > 0) || !(config.eps > 0) || config.beta1 < 0 || config.beta1 >= 1 ||
      config.beta2 < 0 || config.beta2 >= 1 || config.clip_norm < 0) {
    throw ConfigError("invalid Adam hyperparameters");
  }
  reset();
}

void Adam::reset() {
  state_.assign(store_.entries().size(), {});
  for (std::size_t i = 0; i < state_.size(); ++i) {
    const auto& e = store_.entries()[i];
    if (e.kind != ParamKind::Param) continue;
    state_[i].m.assign(e.tensor.numel(), 0.0);
    state_[i].v.assign(e.tensor.numel(), 0.0);
  }
}

void Adam::step(const std::set<ParamGroup>& frozen) {
  const auto& entries = store_.entries();
  if (state_.size() != entries.size()) throw Error("optimizer state does not match the store");
  auto active = [&](const ParameterEntry& e) {
    return e.kind == ParamKind::Param && !frozen.count(e.group) && e.tensor.has_grad();
  };

  double norm2 = 0.0;
  for (const auto& e : entries) {
    if (!active(e)) continue;
    for (double g : e.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in '" + e.name + "'; optimizer step aborted");
      }
      norm2 += g * g;
    }
  }
  double scale = 1.0;
  if (config_.clip_norm > 0) {
    const double norm = std::sqrt(norm2);
    if (norm > config_.clip_norm) scale = config_.clip_norm / norm;
  }

  const double b1 = config_.beta1, b2 = config_.beta2;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto e = entries[i];
    if (!active(e)) continue;
    auto& s = state_[i];
    ++s.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
    auto w = e.tensor.mutable_data();
    auto g = e.tensor.grad();
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = g[k] * scale;
      s.m[k] = b1 * s.m[k] + (1.0 - b1) * gk;
      s.v[k] = b2 * s.v[k] + (1.0 - b2) * gk * gk;
      const double mhat = s.m[k] / c1, vhat = s.v[k] / c2;
      w[k] -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

}  // namespace sleeptl
