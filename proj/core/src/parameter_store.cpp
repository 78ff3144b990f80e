// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The sleeptl Authors

#include "sleeptl/parameter_store.hpp"

#include <algorithm>
#include <cmath>

#include "sleeptl/error.hpp"

namespace sleeptl {

std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::EPB: return "EPB";
    case ParamGroup::SPB: return "SPB";
    case ParamGroup::SOFTMAX: return "SOFTMAX";
  }
  return "?";
}

ParamGroup parse_param_group(std::string_view name) {
  for (auto g : kAllGroups) {
    if (to_string(g) == name) return g;
  }
  throw ParseError("group", "unknown parameter group '" + std::string(name) + "'");
}

std::string_view to_string(ParamKind k) { return k == ParamKind::Param ? "param" : "buffer"; }

ParamKind parse_param_kind(std::string_view name) {
  if (name == "param") return ParamKind::Param;
  if (name == "buffer") return ParamKind::Buffer;
  throw ParseError("kind", "unknown parameter kind '" + std::string(name) + "'");
}

ad::Tensor ParameterStore::add(std::string name, ParamGroup group, ParamKind kind,
                               ad::Shape shape, std::vector<double> values) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  auto t = ad::Tensor::from_data(std::move(shape), std::move(values), kind == ParamKind::Param);
  entries_.push_back({std::move(name), group, kind, t});
  return t;
}

ad::Tensor ParameterStore::add_buffer(std::string name, ParamGroup group, ad::Shape shape,
                                      double fill) {
  std::vector<double> v(ad::shape_numel(shape), fill);
  return add(std::move(name), group, ParamKind::Buffer, std::move(shape), std::move(v));
}

const ParameterEntry& ParameterStore::entry(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw ConfigError("no parameter named '" + std::string(name) + "'");
}

bool ParameterStore::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(),
                     [&](const ParameterEntry& e) { return e.name == name; });
}

std::size_t ParameterStore::param_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.kind == ParamKind::Param) n += e.tensor.numel();
  }
  return n;
}

std::size_t ParameterStore::param_count(ParamGroup g) const {
  std::size_t n = 0;
  for (const auto& e : entries_) {
    if (e.kind == ParamKind::Param && e.group == g) n += e.tensor.numel();
  }
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

void ParameterStore::set_trainable(const std::set<ParamGroup>& frozen) {
  for (auto& e : entries_) {
    if (e.kind == ParamKind::Param) e.tensor.set_requires_grad(!frozen.count(e.group));
  }
}

ad::Tensor ParameterStore::l2_term() const {
  std::vector<ad::Tensor> terms;
  for (const auto& e : entries_) {
    if (e.kind == ParamKind::Param) terms.push_back(ad::sum_squares(e.tensor));
  }
  if (terms.empty()) return ad::Tensor::scalar(0.0);
  return ad::sum(ad::concat(terms, 0));
}

std::vector<std::vector<double>> ParameterStore::values() const {
  std::vector<std::vector<double>> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.emplace_back(e.tensor.data().begin(), e.tensor.data().end());
  return out;
}

void ParameterStore::assign_values(const std::vector<std::vector<double>>& values) {
  if (values.size() != entries_.size()) {
    throw ShapeError("assign_values: " + std::to_string(values.size()) + " arrays for " +
                     std::to_string(entries_.size()) + " parameters");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto dst = entries_[i].tensor.mutable_data();
    if (dst.size() != values[i].size()) {
      throw ShapeError("assign_values: size mismatch for '" + entries_[i].name + "'");
    }
    std::copy(values[i].begin(), values[i].end(), dst.begin());
  }
}

std::vector<double> glorot_uniform(std::size_t fan_in, std::size_t fan_out, std::size_t count,
                                   std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<double> v(count);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace sleeptl
