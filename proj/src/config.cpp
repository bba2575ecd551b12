// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "xprompt/errors.hpp"
#include "xprompt/framework.hpp"

namespace xprompt {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& section) {
  if (!j.is_object()) throw ConfigError(section + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!known.count(key)) throw ConfigError(section + ": unknown key '" + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(section + "." + key + ": " + e.what());
  }
}

// Unsigned fields arrive as JSON numbers; reject negatives explicitly since
// nlohmann would wrap them.
void read_size(const json& j, const char* key, std::size_t& out, const std::string& section) {
  if (!j.contains(key)) return;
  const auto& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(section + "." + key + ": expected a non-negative integer");
  }
  out = v.get<std::size_t>();
}

std::set<std::string> keys_of(const json& j) {
  std::set<std::string> out;
  for (const auto& [key, _] : j.items()) out.insert(key);
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
    throw ConfigError("model: embed_dim must be a positive multiple of heads");
  }
  if (patch_stride != 16) throw ConfigError("model: patch_stride must be 16 (4x/2x/2x embedding)");
  if (ffn_mult == 0 || max_objects == 0 || stage4_dim() == 0 || stage8_dim() == 0) {
    throw ConfigError("model: ffn_mult, max_objects and stage widths must be positive");
  }
  if (prompter_kernel % 2 == 0) throw ConfigError("model: prompter_kernel must be odd");
  if (expert_rank == 0) throw ConfigError("model: expert_rank must be positive");
  if (max_objects > 255) throw ConfigError("model: max_objects must fit in 8 bits");
  for (const auto& t : expert_targets) {
    if (t != "msa-output" && t != "ffn-first" && t != "ffn-second") {
      throw ConfigError("model: unknown expert target '" + t + "'");
    }
  }
}

void SynthConfig::validate() const {
  if (num_sequences == 0 || frames == 0) throw ConfigError("synth: need at least one sequence and frame");
  if (height % 16 != 0 || width % 16 != 0 || height == 0 || width == 0) {
    throw ConfigError("synth: height and width must be positive multiples of 16");
  }
  if (min_objects == 0 || min_objects > max_objects) throw ConfigError("synth: invalid object count range");
  if (!(min_size > 0 && min_size <= max_size)) throw ConfigError("synth: invalid object size range");
  if (!(min_speed >= 0 && min_speed <= max_speed)) throw ConfigError("synth: invalid speed range");
  if (!(severity >= 0.0 && severity <= 1.0)) throw ConfigError("synth: severity must lie in [0, 1]");
}

void TrainConfig::validate() const {
  if (!(pretrain_lr >= 0 && adapt_lr >= 0)) throw ConfigError("train: learning rates must be non-negative");
  if (!(keep_ratio_final > 0 && keep_ratio_final <= 1)) throw ConfigError("train: keep_ratio_final in (0, 1]");
  if (!(keep_warmup_fraction >= 0 && keep_warmup_fraction <= 1)) {
    throw ConfigError("train: keep_warmup_fraction in [0, 1]");
  }
  if (clip_length < 2) throw ConfigError("train: clip_length must be at least 2");
  Variant::parse(variant);
}

void EvalConfig::validate() const {
  if (boundary_tol < 0) throw ConfigError("eval: boundary_tol must be non-negative");
  if (variants.empty()) throw ConfigError("eval: variant list is empty");
  if (train_sequences == 0 || test_sequences == 0) throw ConfigError("eval: sequence counts must be positive");
  for (const auto& name : variants) Variant::parse(name);
}

void RunConfig::validate() const {
  model.validate();
  synth.validate();
  train.validate();
  eval.validate();
  if (synth.max_objects > model.max_objects) {
    throw ConfigError("synth.max_objects exceeds model.max_objects");
  }
}

std::string to_string(Corruption c) {
  switch (c) {
    case Corruption::none: return "none";
    case Corruption::low_contrast: return "low-contrast";
    case Corruption::darkness: return "darkness";
    case Corruption::clutter: return "clutter";
  }
  return "none";
}

std::string to_string(XSignal s) {
  switch (s) {
    case XSignal::thermal: return "thermal";
    case XSignal::depth: return "depth";
    case XSignal::event: return "event";
  }
  return "thermal";
}

Corruption parse_corruption(const std::string& s) {
  for (auto c : {Corruption::none, Corruption::low_contrast, Corruption::darkness, Corruption::clutter}) {
    if (to_string(c) == s) return c;
  }
  throw ConfigError("unknown corruption '" + s + "'");
}

XSignal parse_x_signal(const std::string& s) {
  for (auto x : {XSignal::thermal, XSignal::depth, XSignal::event}) {
    if (to_string(x) == s) return x;
  }
  throw ConfigError("unknown x_signal '" + s + "'");
}

json to_json(const ModelConfig& c) {
  return json{{"embed_dim", c.embed_dim},
              {"layers", c.layers},
              {"heads", c.heads},
              {"ffn_mult", c.ffn_mult},
              {"max_objects", c.max_objects},
              {"dim4", c.dim4},
              {"dim8", c.dim8},
              {"patch_stride", c.patch_stride},
              {"prompter_kernel", c.prompter_kernel},
              {"mlp_ratio", c.mlp_ratio},
              {"expert_rank", c.expert_rank},
              {"num_experts", c.num_experts},
              {"expert_targets", c.expert_targets},
              {"adapter_bottleneck", c.adapter_bottleneck},
              {"ln_eps", c.ln_eps}};
}

json to_json(const SynthConfig& c) {
  return json{{"num_sequences", c.num_sequences},
              {"frames", c.frames},
              {"height", c.height},
              {"width", c.width},
              {"min_objects", c.min_objects},
              {"max_objects", c.max_objects},
              {"min_size", c.min_size},
              {"max_size", c.max_size},
              {"min_speed", c.min_speed},
              {"max_speed", c.max_speed},
              {"corruption", to_string(c.corruption)},
              {"severity", c.severity},
              {"x_signal", to_string(c.x_signal)},
              {"seed", c.seed}};
}

json to_json(const TrainConfig& c) {
  return json{{"pretrain_steps", c.pretrain_steps},
              {"adapt_steps", c.adapt_steps},
              {"pretrain_lr", c.pretrain_lr},
              {"adapt_lr", c.adapt_lr},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"adam_eps", c.adam_eps},
              {"keep_ratio_final", c.keep_ratio_final},
              {"keep_warmup_fraction", c.keep_warmup_fraction},
              {"clip_length", c.clip_length},
              {"variant", c.variant},
              {"log_every", c.log_every}};
}

json to_json(const EvalConfig& c) {
  return json{{"boundary_tol", c.boundary_tol},
              {"variants", c.variants},
              {"train_sequences", c.train_sequences},
              {"test_sequences", c.test_sequences},
              {"pretrain_sequences", c.pretrain_sequences}};
}

json to_json(const RunConfig& c) {
  return json{{"model", to_json(c.model)}, {"synth", to_json(c.synth)}, {"train", to_json(c.train)},
              {"eval", to_json(c.eval)}};
}

ModelConfig model_config_from_json(const json& j) {
  const std::string s = "model";
  ModelConfig c;
  reject_unknown(j, keys_of(to_json(c)), s);
  read_size(j, "embed_dim", c.embed_dim, s);
  read_size(j, "layers", c.layers, s);
  read_size(j, "heads", c.heads, s);
  read_size(j, "ffn_mult", c.ffn_mult, s);
  read_size(j, "max_objects", c.max_objects, s);
  read_size(j, "dim4", c.dim4, s);
  read_size(j, "dim8", c.dim8, s);
  read_size(j, "patch_stride", c.patch_stride, s);
  read_size(j, "prompter_kernel", c.prompter_kernel, s);
  read_size(j, "mlp_ratio", c.mlp_ratio, s);
  read_size(j, "expert_rank", c.expert_rank, s);
  read_size(j, "num_experts", c.num_experts, s);
  read(j, "expert_targets", c.expert_targets, s);
  read_size(j, "adapter_bottleneck", c.adapter_bottleneck, s);
  read(j, "ln_eps", c.ln_eps, s);
  c.validate();
  return c;
}

SynthConfig synth_config_from_json(const json& j) {
  const std::string s = "synth";
  SynthConfig c;
  reject_unknown(j, keys_of(to_json(c)), s);
  read_size(j, "num_sequences", c.num_sequences, s);
  read_size(j, "frames", c.frames, s);
  read_size(j, "height", c.height, s);
  read_size(j, "width", c.width, s);
  read_size(j, "min_objects", c.min_objects, s);
  read_size(j, "max_objects", c.max_objects, s);
  read(j, "min_size", c.min_size, s);
  read(j, "max_size", c.max_size, s);
  read(j, "min_speed", c.min_speed, s);
  read(j, "max_speed", c.max_speed, s);
  std::string text = to_string(c.corruption);
  read(j, "corruption", text, s);
  c.corruption = parse_corruption(text);
  read(j, "severity", c.severity, s);
  text = to_string(c.x_signal);
  read(j, "x_signal", text, s);
  c.x_signal = parse_x_signal(text);
  std::size_t seed = c.seed;
  read_size(j, "seed", seed, s);
  c.seed = seed;
  c.validate();
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  const std::string s = "train";
  TrainConfig c;
  reject_unknown(j, keys_of(to_json(c)), s);
  read_size(j, "pretrain_steps", c.pretrain_steps, s);
  read_size(j, "adapt_steps", c.adapt_steps, s);
  read(j, "pretrain_lr", c.pretrain_lr, s);
  read(j, "adapt_lr", c.adapt_lr, s);
  read(j, "beta1", c.beta1, s);
  read(j, "beta2", c.beta2, s);
  read(j, "adam_eps", c.adam_eps, s);
  read(j, "keep_ratio_final", c.keep_ratio_final, s);
  read(j, "keep_warmup_fraction", c.keep_warmup_fraction, s);
  read_size(j, "clip_length", c.clip_length, s);
  read(j, "variant", c.variant, s);
  read_size(j, "log_every", c.log_every, s);
  c.validate();
  return c;
}

EvalConfig eval_config_from_json(const json& j) {
  const std::string s = "eval";
  EvalConfig c;
  reject_unknown(j, keys_of(to_json(c)), s);
  read(j, "boundary_tol", c.boundary_tol, s);
  read(j, "variants", c.variants, s);
  read_size(j, "train_sequences", c.train_sequences, s);
  read_size(j, "test_sequences", c.test_sequences, s);
  read_size(j, "pretrain_sequences", c.pretrain_sequences, s);
  c.validate();
  return c;
}

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"model", "synth", "train", "eval"}, "config");
  RunConfig c;
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("synth")) c.synth = synth_config_from_json(j.at("synth"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
  if (j.contains("eval")) c.eval = eval_config_from_json(j.at("eval"));
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::string config_hash(const RunConfig& c) {
  const std::string text = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace xprompt
