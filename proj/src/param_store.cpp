// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/param_store.hpp"

#include <algorithm>

#include "xprompt/errors.hpp"

namespace xprompt {

namespace {
constexpr std::pair<ParamGroup, std::string_view> kGroupNames[] = {
    {ParamGroup::foundation, "foundation"}, {ParamGroup::decoder, "decoder"},
    {ParamGroup::rgb_embed, "rgb-embed"},   {ParamGroup::x_embed, "x-embed"},
    {ParamGroup::prompter, "prompter"},     {ParamGroup::experts, "experts"},
};
}  // namespace

std::string_view to_string(ParamGroup group) {
  for (const auto& [g, name] : kGroupNames) {
    if (g == group) return name;
  }
  return "unknown";
}

ParamGroup parse_param_group(std::string_view name) {
  for (const auto& [g, n] : kGroupNames) {
    if (n == name) return g;
  }
  throw ConfigError("unknown parameter group '" + std::string(name) + "'");
}

Tensor ParamStore::add(const std::string& name, Tensor value, ParamGroup group) {
  if (contains(name)) throw ContractError("param store: duplicate parameter '" + name + "'");
  if (!value.is_leaf()) throw ContractError("param store: '" + name + "' is not a leaf tensor");
  value.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.push_back({name, value, group, false});
  return value;
}

Tensor ParamStore::add_normal(const std::string& name, Shape shape, ParamGroup group, Rng& rng, double stddev) {
  std::vector<double> values(numel(shape));
  for (double& v : values) v = rng.normal(0.0, stddev);
  return add(name, Tensor::from(std::move(shape), std::move(values)), group);
}

Tensor ParamStore::add_constant(const std::string& name, Shape shape, ParamGroup group, double value) {
  return add(name, Tensor::full(std::move(shape), value), group);
}

const ParamEntry& ParamStore::entry(const std::string& name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("param store: no parameter '" + name + "'");
  return entries_[it->second];
}

void ParamStore::set_frozen(const std::string& name, bool frozen) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("param store: no parameter '" + name + "'");
  auto& e = entries_[it->second];
  e.frozen = frozen;
  e.tensor.set_requires_grad(!frozen);
}

void ParamStore::set_group_frozen(ParamGroup group, bool frozen) {
  for (auto& e : entries_) {
    if (e.group == group) {
      e.frozen = frozen;
      e.tensor.set_requires_grad(!frozen);
    }
  }
}

std::size_t ParamStore::total_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.numel();
  return n;
}

std::size_t ParamStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.frozen ? 0 : e.tensor.numel();
  return n;
}

std::size_t ParamStore::group_count(ParamGroup group) const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.group == group ? e.tensor.numel() : 0;
  return n;
}

std::size_t ParamStore::trainable_group_count(ParamGroup group) const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += (e.group == group && !e.frozen) ? e.tensor.numel() : 0;
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.tensor.zero_grad();
}

GradMap ParamStore::grads() const {
  GradMap out;
  for (const auto& e : entries_) {
    if (e.frozen) continue;
    std::vector<double> g(e.tensor.numel(), 0.0);
    if (e.tensor.has_grad()) std::copy(e.tensor.grad().begin(), e.tensor.grad().end(), g.begin());
    out.emplace(e.name, std::move(g));
  }
  return out;
}

void ParamStore::round_to_f32() {
  for (auto& e : entries_) {
    for (double& v : e.tensor.mutable_values()) v = static_cast<double>(static_cast<float>(v));
  }
}

}  // namespace xprompt

namespace xprompt {

ParamReport make_report(const ParamStore& store) {
  ParamReport r;
  r.total = store.total_count();
  r.trainable = store.trainable_count();
  r.frozen = r.total - r.trainable;
  r.experts = store.trainable_group_count(ParamGroup::experts);
  r.prompter = store.trainable_group_count(ParamGroup::prompter);
  r.x_embed = store.trainable_group_count(ParamGroup::x_embed);
  r.trainable_foundation = store.trainable_group_count(ParamGroup::foundation) +
                           store.trainable_group_count(ParamGroup::decoder) +
                           store.trainable_group_count(ParamGroup::rgb_embed);
  return r;
}

std::size_t copy_parameters(const ParamStore& from, ParamStore& to) {
  std::size_t copied = 0;
  for (const auto& e : to.entries()) {
    if (!from.contains(e.name)) continue;
    const Tensor src = from.get(e.name);
    if (src.shape() != e.tensor.shape()) {
      throw ContractError("copy_parameters: '" + e.name + "' is " + shape_str(src.shape()) + " in the source and " +
                          shape_str(e.tensor.shape()) + " in the target");
    }
    Tensor dst = e.tensor;
    std::copy(src.values().begin(), src.values().end(), dst.mutable_values().begin());
    ++copied;
  }
  return copied;
}

}  // namespace xprompt
