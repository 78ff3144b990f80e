// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#pragma once

#include <cstddef>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "sleeptl/autodiff.hpp"

namespace sleeptl {

/// Freezing unit for transfer learning.
enum class ParamGroup { EPB, SPB, SOFTMAX };

inline constexpr ParamGroup kAllGroups[] = {ParamGroup::EPB, ParamGroup::SPB, ParamGroup::SOFTMAX};

std::string_view to_string(ParamGroup g);
ParamGroup parse_param_group(std::string_view name);

/// Learnable parameters take part in gradients and the L2 term; buffers
/// (batch-norm running statistics) are state saved alongside them.
enum class ParamKind { Param, Buffer };

std::string_view to_string(ParamKind k);
ParamKind parse_param_kind(std::string_view name);

struct ParameterEntry {
  std::string name;
  ParamGroup group = ParamGroup::EPB;
  ParamKind kind = ParamKind::Param;
  ad::Tensor tensor;
};

/// Named parameters of one model. Layers keep `ad::Tensor` handles into the
/// store, so values must be updated in place (see `assign_values`).
class ParameterStore {
 public:
  ParameterStore() = default;
  ParameterStore(const ParameterStore&) = delete;
  ParameterStore& operator=(const ParameterStore&) = delete;
  ParameterStore(ParameterStore&&) = default;
  ParameterStore& operator=(ParameterStore&&) = default;

  ad::Tensor add(std::string name, ParamGroup group, ParamKind kind, ad::Shape shape,
                 std::vector<double> values);
  ad::Tensor add_param(std::string name, ParamGroup group, ad::Shape shape,
                       std::vector<double> values) {
    return add(std::move(name), group, ParamKind::Param, std::move(shape), std::move(values));
  }
  ad::Tensor add_buffer(std::string name, ParamGroup group, ad::Shape shape, double fill);

  const std::vector<ParameterEntry>& entries() const { return entries_; }
  const ParameterEntry& entry(std::string_view name) const;
  bool contains(std::string_view name) const;

  /// Scalar count of learnable values (buffers excluded).
  std::size_t param_count() const;
  std::size_t param_count(ParamGroup g) const;

  void zero_grad();
  /// Marks each learnable parameter as requiring a gradient unless its group
  /// is frozen.
  void set_trainable(const std::set<ParamGroup>& frozen);

  /// sum over learnable parameters of ||p||^2, as a graph node.
  ad::Tensor l2_term() const;

  /// Flat copy of every entry's values (params and buffers, in entry order).
  std::vector<std::vector<double>> values() const;
  /// Writes values back in place; shapes must match entry order.
  void assign_values(const std::vector<std::vector<double>>& values);

 private:
  std::vector<ParameterEntry> entries_;
};

/// Glorot-uniform initializer for a [fan_in, fan_out] weight.
std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::size_t count,
                                   std::mt19937_64& rng);

}  // namespace sleeptl
