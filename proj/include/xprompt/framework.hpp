// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Full model wiring: RGB foundation model, optional X branch with prompter,
// and per-layer adaptation. Parameter names are stable and double as
// checkpoint keys.

#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xprompt/config.hpp"
#include "xprompt/foundation.hpp"
#include "xprompt/maes.hpp"
#include "xprompt/mvp.hpp"
#include "xprompt/param_store.hpp"
#include "xprompt/video.hpp"

namespace xprompt {

/// How the encoder input and decoder prompts are formed.
///   rgb-only  RGB tokens only (the foundation model as pretrained)
///   x-only    X tokens through the X embedding, no RGB
///   concat    fuse linear over [RGB | X] without attention gating
///   mvp       fuse linear plus spatial and channel attention
enum class PromptMode { rgb_only, x_only, concat, mvp };

/// What is trained on top of the prompt path.
enum class AdaptMode { frozen, full_ft, adapter, lora, maes };

struct Variant {
  PromptMode prompt = PromptMode::rgb_only;
  AdaptMode adapt = AdaptMode::frozen;
  std::size_t experts = 0;  // maes only; 0 selects the model default

  bool uses_x() const { return prompt != PromptMode::rgb_only; }
  /// "mvp+maes", "rgb-only+frozen", "concat+lora", "mvp+maes(K=3)", ...
  std::string name() const;
  static Variant parse(const std::string& text);

  bool operator==(const Variant&) const = default;
};

std::string to_string(PromptMode m);
std::string to_string(AdaptMode m);

/// Everything a frame contributes, computed once and reused while it stays
/// in the reference set.
struct FrameEncoding {
  PatchTokens rgb;
  std::optional<PatchTokens> x;
  Tensor z0;  // N x D encoder input segment
  Tensor p8;  // decoder prompt, H/8 x W/8 x d8
  Tensor p4;  // decoder prompt, H/4 x W/4 x d4
};

struct Reference {
  const FrameEncoding* frame;
  Tensor mask_tokens;  // N x D
};

class XPromptModel {
 public:
  XPromptModel(const ModelConfig& cfg, std::uint64_t seed);
  XPromptModel(const XPromptModel&) = delete;
  XPromptModel& operator=(const XPromptModel&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const Variant& variant() const { return variant_; }
  bool adapting() const { return adapting_; }

  /// Switches from RGB pretraining to the multi-modal stage: applies the
  /// freeze policy, creates the X embedding (initialized from the RGB one)
  /// and prompter as the variant requires, and attaches experts, LoRA or
  /// adapters. Callable once.
  void begin_adaptation(const Variant& variant, std::uint64_t seed);

  /// Wraps each targeted encoder linear with K experts of rank r. K = 0 is
  /// a no-op. Unknown target names raise ConfigError; targets already
  /// wrapped raise ContractError.
  ParamReport inject_experts(std::size_t K, std::size_t r, std::span<const std::string> targets, bool routed,
                             std::uint64_t seed);

  ParamReport report() const { return make_report(store_); }

  FrameEncoding encode_frame(const Tensor& rgb, const Tensor* xmap) const;
  Tensor mask_tokens(const SegmentationMask& mask, std::size_t objects) const;
  /// H x W x (objects + 1) logits for `current` given the reference set.
  Tensor predict(const FrameEncoding& current, std::span<const Reference> refs, std::size_t objects) const;

  /// Frame 1 keeps `first_mask`; each later frame is conditioned on frame 1
  /// and the most recent frame with its predicted mask.
  std::vector<SegmentationMask> segment_video(const VideoSample& sample, const SegmentationMask& first_mask) const;

  const PatchEmbed& rgb_embed() const { return rgb_embed_; }
  const PatchEmbed* x_embed() const { return x_embed_.get(); }
  const MaskEmbed& mask_embed() const { return mask_embed_; }
  std::span<const EncoderLayerParams> layers() const { return layers_; }
  std::span<const LayerAdaptation> adaptations() const { return adaptations_; }
  const DecoderParams& decoder() const { return decoder_; }
  const PrompterParams* prompter() const { return prompter_ ? &*prompter_ : nullptr; }

 private:
  ModelConfig cfg_;
  ParamStore store_;
  Rng init_rng_;
  PatchEmbed rgb_embed_;
  MaskEmbed mask_embed_;
  std::vector<EncoderLayerParams> layers_;
  DecoderParams decoder_;
  std::unique_ptr<PatchEmbed> x_embed_;
  std::optional<PrompterParams> prompter_;
  std::vector<LayerAdaptation> adaptations_;
  Variant variant_;
  bool adapting_ = false;
};

}  // namespace xprompt
