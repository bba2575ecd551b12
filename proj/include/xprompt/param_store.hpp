// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "xprompt/rng.hpp"
#include "xprompt/tensor.hpp"

namespace xprompt {

enum class ParamGroup { foundation, decoder, rgb_embed, x_embed, prompter, experts };

std::string_view to_string(ParamGroup group);
ParamGroup parse_param_group(std::string_view name);

struct ParamEntry {
  std::string name;
  Tensor tensor;
  ParamGroup group;
  bool frozen = false;
};

using GradMap = std::map<std::string, std::vector<double>>;

/// Named parameter registry in insertion order. A frozen entry's tensor
/// never requires a gradient, so no op records a path into it.
class ParamStore {
 public:
  Tensor add(const std::string& name, Tensor value, ParamGroup group);
  Tensor add_normal(const std::string& name, Shape shape, ParamGroup group, Rng& rng, double stddev);
  Tensor add_constant(const std::string& name, Shape shape, ParamGroup group, double value);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const ParamEntry& entry(const std::string& name) const;
  Tensor get(const std::string& name) const { return entry(name).tensor; }
  const std::vector<ParamEntry>& entries() const { return entries_; }

  void set_frozen(const std::string& name, bool frozen);
  void set_group_frozen(ParamGroup group, bool frozen);
  bool is_frozen(const std::string& name) const { return entry(name).frozen; }

  std::size_t total_count() const;
  std::size_t trainable_count() const;
  std::size_t group_count(ParamGroup group) const;
  std::size_t trainable_group_count(ParamGroup group) const;

  void zero_grad();
  /// Gradients of trainable entries; entries without one map to zeros.
  GradMap grads() const;

  /// Rounds every value through binary32, the checkpoint precision.
  void round_to_f32();

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace xprompt

namespace xprompt {

/// Parameter accounting for a model. `experts`, `prompter` and `x_embed`
/// count trainable entries of those groups only.
struct ParamReport {
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::size_t frozen = 0;
  std::size_t experts = 0;
  std::size_t prompter = 0;
  std::size_t x_embed = 0;
  std::size_t trainable_foundation = 0;  // foundation + decoder + rgb-embed

  double trainable_ratio() const { return total ? static_cast<double>(trainable) / static_cast<double>(total) : 0.0; }
  /// Adaptation-expert share of all parameters, the quantity tabulated for
  /// expert-count sweeps (zero when no experts are attached).
  double expert_ratio() const { return total ? static_cast<double>(experts) / static_cast<double>(total) : 0.0; }
};

ParamReport make_report(const ParamStore& store);

/// Copies values of same-named entries from `from` into `to` (shapes must
/// agree). Entries only one side has are skipped. Returns the copy count.
std::size_t copy_parameters(const ParamStore& from, ParamStore& to);

}  // namespace xprompt
