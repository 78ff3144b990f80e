// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <set>
#include <vector>

#include "sleeptl/parameter_store.hpp"

namespace sleeptl {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clipping threshold; 0 disables clipping.
  double clip_norm = 0.0;
};

/// Adam over the learnable entries of a store. Each parameter keeps its own
/// step counter so that frozen parameters' state stays untouched.
class Adam {
 public:
  Adam(ParameterStore& store, AdamConfig config);

  /// Updates every learnable parameter outside `frozen` from its gradient.
  /// Throws NumericError before touching anything if a gradient is not finite.
  void step(const std::set<ParamGroup>& frozen = {});
  /// Zeroes moments and step counters.
  void reset();

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

  struct Moments {
    std::vector<double> m, v;
    std::size_t t = 0;
  };
  /// Per-entry state, parallel to store.entries() (empty for buffers).
  const std::vector<Moments>& state() const { return state_; }

 private:
  ParameterStore& store_;
  AdamConfig config_;
  std::vector<Moments> state_;
};

}  // namespace sleeptl
