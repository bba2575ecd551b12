// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace xprompt {

struct ModelConfig {
  std::size_t embed_dim = 64;  // D, width of the stride-16 tokens
  std::size_t layers = 2;
  std::size_t heads = 2;
  std::size_t ffn_mult = 4;
  std::size_t max_objects = 3;  // O_max
  std::size_t dim4 = 0;         // 0: D/4. Width of stride-4 tokens and last decoder stage.
  std::size_t dim8 = 0;         // 0: D/2. Width of stride-8 tokens and first decoder stage.
  std::size_t patch_stride = 16;
  std::size_t prompter_kernel = 7;
  std::size_t mlp_ratio = 16;  // channel-attention hidden width = D / mlp_ratio
  std::size_t expert_rank = 4;
  std::size_t num_experts = 2;
  std::vector<std::string> expert_targets{"msa-output", "ffn-first", "ffn-second"};
  std::size_t adapter_bottleneck = 8;
  double ln_eps = 1e-5;

  std::size_t stage4_dim() const { return dim4 ? dim4 : embed_dim / 4; }
  std::size_t stage8_dim() const { return dim8 ? dim8 : embed_dim / 2; }
  std::size_t mlp_hidden() const { return embed_dim / mlp_ratio ? embed_dim / mlp_ratio : 1; }
  void validate() const;
};

enum class Corruption { none, low_contrast, darkness, clutter };
enum class XSignal { thermal, depth, event };

struct SynthConfig {
  std::size_t num_sequences = 8;
  std::size_t frames = 8;  // T
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t min_objects = 1;
  std::size_t max_objects = 2;
  double min_size = 12.0;  // object extent in pixels
  double max_size = 22.0;
  double min_speed = 1.0;  // pixels per frame
  double max_speed = 3.0;
  Corruption corruption = Corruption::none;
  double severity = 0.0;
  XSignal x_signal = XSignal::thermal;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainConfig {
  std::size_t pretrain_steps = 200;
  std::size_t adapt_steps = 200;
  double pretrain_lr = 1e-3;
  double adapt_lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double keep_ratio_final = 0.15;
  double keep_warmup_fraction = 0.1;
  std::size_t clip_length = 3;
  std::string variant = "mvp+maes";
  std::size_t log_every = 50;

  void validate() const;
};

struct EvalConfig {
  double boundary_tol = 0.0;  // pixels; 0 selects ceil(0.008 * diagonal)
  std::vector<std::string> variants{"rgb-only+frozen", "mvp+frozen", "mvp+maes"};
  std::size_t train_sequences = 40;
  std::size_t test_sequences = 10;
  std::size_t pretrain_sequences = 200;

  void validate() const;
};

struct RunConfig {
  ModelConfig model;
  SynthConfig synth;
  TrainConfig train;
  EvalConfig eval;

  void validate() const;
};

std::string to_string(Corruption c);
std::string to_string(XSignal s);
Corruption parse_corruption(const std::string& s);
XSignal parse_x_signal(const std::string& s);

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const SynthConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const EvalConfig& c);
nlohmann::json to_json(const RunConfig& c);

/// Strict parsing: unknown keys and wrong types raise ConfigError.
ModelConfig model_config_from_json(const nlohmann::json& j);
SynthConfig synth_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
EvalConfig eval_config_from_json(const nlohmann::json& j);
RunConfig run_config_from_json(const nlohmann::json& j);

RunConfig load_run_config(const std::string& path);

/// Stable 64-bit FNV-1a hash of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const RunConfig& c);

}  // namespace xprompt
