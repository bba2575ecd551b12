// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/training.hpp"

#include <chrono>

#include "xprompt/checkpoint.hpp"
#include "xprompt/errors.hpp"
#include "xprompt/losses.hpp"
#include "xprompt/optimizer.hpp"
#include "xprompt/synth.hpp"

namespace xprompt {

using namespace ops;

Tensor clip_loss(const XPromptModel& model, const VideoSample& sample, std::size_t start, std::size_t length,
                 double keep_ratio) {
  if (length < 2 || start + length > sample.length()) {
    throw ContractError("clip_loss: clip [" + std::to_string(start) + ", +" + std::to_string(length) +
                        ") does not fit a sequence of " + std::to_string(sample.length()) + " frames");
  }
  const bool with_x = model.adapting() && model.variant().uses_x();
  std::vector<FrameEncoding> enc;
  std::vector<Tensor> mask_tokens;
  for (std::size_t k = 0; k < length; ++k) {
    const std::size_t t = start + k;
    enc.push_back(model.encode_frame(sample.frames[t], with_x ? &sample.xmaps[t] : nullptr));
    // The last frame is never used as a reference.
    if (k + 1 < length) mask_tokens.push_back(model.mask_tokens(sample.masks[t], sample.objects));
  }
  std::vector<Tensor> losses;
  for (std::size_t k = 1; k < length; ++k) {
    const Reference refs[2] = {{&enc[0], mask_tokens[0]}, {&enc[k - 1], mask_tokens[k - 1]}};
    const Tensor logits = model.predict(enc[k], refs, sample.objects);
    losses.push_back(combined_loss(logits, sample.masks[start + k], keep_ratio));
  }
  return mean(concat(std::span<const Tensor>(losses), 0));
}

TrainLog train(XPromptModel& model, const std::vector<VideoSample>& data, std::size_t steps, double lr,
               const TrainConfig& cfg, std::uint64_t seed, const StepCallback& on_step) {
  cfg.validate();
  if (data.empty()) throw ContractError("train: no training sequences");
  for (const auto& s : data) {
    if (s.length() < cfg.clip_length) {
      throw ContractError("train: sequence '" + s.name + "' is shorter than the clip length");
    }
  }
  TrainLog log;
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(Rng::mix(seed, 7));
  AdamState state;
  const AdamConfig adam{lr, cfg.beta1, cfg.beta2, cfg.adam_eps};
  for (std::size_t step = 0; step < steps; ++step) {
    const auto& sample = data[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(data.size()) - 1))];
    const auto start = static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<int>(sample.length() - cfg.clip_length)));
    const double keep = keep_ratio_at(step, steps, cfg.keep_warmup_fraction, cfg.keep_ratio_final);
    model.params().zero_grad();
    const Tensor loss = clip_loss(model, sample, start, cfg.clip_length, keep);
    backward(loss);
    adam_step(model.params(), model.params().grads(), state, adam);
    log.losses.push_back(loss.item());
    if (on_step) on_step(step, loss.item());
  }
  model.params().zero_grad();
  log.ignored_frozen = state.ignored_frozen;
  log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return log;
}

TrainLog pretrain(XPromptModel& model, const std::vector<VideoSample>& data, const TrainConfig& cfg,
                  std::uint64_t seed, const StepCallback& on_step) {
  if (model.adapting()) throw ContractError("pretrain: model is already in the adaptation stage");
  return train(model, data, cfg.pretrain_steps, cfg.pretrain_lr, cfg, seed, on_step);
}

TrainLog adapt(XPromptModel& model, const std::vector<VideoSample>& data, const Variant& variant,
               const TrainConfig& cfg, std::uint64_t seed, const StepCallback& on_step) {
  model.begin_adaptation(variant, seed);
  if (model.params().trainable_count() == 0) return {};
  return train(model, data, cfg.adapt_steps, cfg.adapt_lr, cfg, Rng::mix(seed, 11), on_step);
}

std::vector<VideoSample> pretrain_dataset(const SynthConfig& synth, std::size_t count, std::uint64_t seed) {
  SynthConfig c = synth;
  c.corruption = Corruption::none;
  c.severity = 0.0;
  c.num_sequences = count;
  c.seed = Rng::mix(seed, 1000);
  return synth_generate(c);
}

void save_model(const std::string& dir, const XPromptModel& model, const nlohmann::json& extra_meta) {
  nlohmann::json meta = extra_meta.is_object() ? extra_meta : nlohmann::json::object();
  meta["stage"] = model.adapting() ? "adapt" : "pretrain";
  if (model.adapting()) meta["variant"] = model.variant().name();
  save_checkpoint(dir, model.params(), model.config(), meta);
}

std::unique_ptr<XPromptModel> load_model(const std::string& dir) {
  const Checkpoint ckpt = load_checkpoint(dir);
  auto model = std::make_unique<XPromptModel>(ckpt.model, 0);
  const std::string stage = ckpt.meta.value("stage", std::string("pretrain"));
  if (stage == "adapt") {
    model->begin_adaptation(Variant::parse(ckpt.meta.value("variant", std::string())), 0);
  } else if (stage != "pretrain") {
    throw IoError("checkpoint '" + dir + "' has unknown stage '" + stage + "'");
  }
  for (const auto& e : model->params().entries()) {
    if (ckpt.find(e.name) == nullptr) throw IoError("checkpoint '" + dir + "' lacks parameter '" + e.name + "'");
  }
  apply_checkpoint(ckpt, model->params());
  return model;
}

}  // namespace xprompt
