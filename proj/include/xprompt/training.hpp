// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Two-stage protocol: RGB pretraining of the whole model, then adaptation
// of the prompt path and experts with the foundation frozen. A step samples
// one clip of consecutive frames; frame k > 0 of the clip is predicted from
// (frame 0, its mask) and (frame k-1, its ground-truth mask).

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xprompt/config.hpp"
#include "xprompt/framework.hpp"
#include "xprompt/video.hpp"

namespace xprompt {

struct TrainLog {
  std::vector<double> losses;  // one per step
  std::size_t ignored_frozen = 0;
  double seconds = 0.0;
};

using StepCallback = std::function<void(std::size_t step, double loss)>;

/// Mean combined loss over the predicted frames of one clip.
Tensor clip_loss(const XPromptModel& model, const VideoSample& sample, std::size_t start, std::size_t length,
                 double keep_ratio);

/// `steps` Adam updates of the model's trainable parameters.
TrainLog train(XPromptModel& model, const std::vector<VideoSample>& data, std::size_t steps, double lr,
               const TrainConfig& cfg, std::uint64_t seed, const StepCallback& on_step = {});

/// Stage 1 on RGB data; the model must not be adapting yet.
TrainLog pretrain(XPromptModel& model, const std::vector<VideoSample>& data, const TrainConfig& cfg,
                  std::uint64_t seed, const StepCallback& on_step = {});

/// Stage 2: begin_adaptation(variant) then train. Variants with nothing to
/// train return an empty log.
TrainLog adapt(XPromptModel& model, const std::vector<VideoSample>& data, const Variant& variant,
               const TrainConfig& cfg, std::uint64_t seed, const StepCallback& on_step = {});

/// Clean RGB sequences used for stage 1, derived from `synth` and `seed`.
std::vector<VideoSample> pretrain_dataset(const SynthConfig& synth, std::size_t count, std::uint64_t seed);

/// Writes a checkpoint whose meta records the stage and variant, so
/// load_model can rebuild the same parameter layout.
void save_model(const std::string& dir, const XPromptModel& model,
                const nlohmann::json& extra_meta = nlohmann::json::object());
std::unique_ptr<XPromptModel> load_model(const std::string& dir);

}  // namespace xprompt
