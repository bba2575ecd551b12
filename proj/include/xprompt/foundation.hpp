// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// RGB video object segmentation foundation model: progressive convolutional
// patch embedding (strides 4, 8, 16), a post-norm transformer encoder whose
// reference-token values carry a mask embedding, and an FPN-style decoder.
//
// Token layout throughout is [current N_t | reference N_r] along rows.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xprompt/config.hpp"
#include "xprompt/maes.hpp"
#include "xprompt/param_store.hpp"
#include "xprompt/video.hpp"

namespace xprompt {

/// Multi-scale tokens of one frame.
struct PatchTokens {
  Tensor tokens4;   // H/4 x W/4 x d4
  Tensor tokens8;   // H/8 x W/8 x d8
  Tensor tokens16;  // N x D, N = (H/16)(W/16), row-major over the grid
  std::size_t grid_h = 0;
  std::size_t grid_w = 0;
};

/// conv 7x7/s4 (pad 3) -> GELU -> conv 2x2/s2 -> GELU -> conv 2x2/s2.
class PatchEmbed {
 public:
  PatchEmbed(ParamStore& store, const std::string& prefix, ParamGroup group, std::size_t in_channels,
             const ModelConfig& cfg, Rng& rng);

  /// image: H x W x C with H, W divisible by 16.
  PatchTokens forward(const Tensor& image) const;

  std::size_t in_channels() const { return in_channels_; }
  Tensor stage_weight(int stage) const;
  Tensor stage_bias(int stage) const;

 private:
  std::size_t in_channels_;
  Tensor w1_, b1_, w2_, b2_, w3_, b3_;
};

/// One-hot planes 1..O_max of a mask (H x W x O_max). The background plane
/// is implied and carries no weight, so an all-background mask embeds to
/// the bias alone.
Tensor mask_planes(const SegmentationMask& mask, std::size_t max_objects);

/// Single stride-16 convolution over the foreground one-hot planes.
class MaskEmbed {
 public:
  MaskEmbed(ParamStore& store, const ModelConfig& cfg, Rng& rng);

  /// N_r x D tokens; throws when `objects` exceeds O_max or a mask id
  /// exceeds `objects`.
  Tensor forward(const SegmentationMask& mask, std::size_t objects) const;

  Tensor weight() const { return w_; }
  Tensor bias() const { return b_; }

 private:
  std::size_t max_objects_;
  Tensor w_, b_;
};

struct EncoderLayerParams {
  Tensor q_w, q_b, k_w, k_b, v_w, v_b, out_w, out_b;
  Tensor ln1_g, ln1_b;
  Tensor ffn1_w, ffn1_b, ffn2_w, ffn2_b;
  Tensor ln2_g, ln2_b;
};

EncoderLayerParams make_encoder_layer(ParamStore& store, std::size_t index, const ModelConfig& cfg, Rng& rng);

/// Optional per-layer adaptation: expert banks on the targeted linears and a
/// bottleneck adapter on the layer output (ablation baseline).
struct LayerAdaptation {
  std::optional<ExpertBank> msa_output;
  std::optional<ExpertBank> ffn_first;
  std::optional<ExpertBank> ffn_second;
  Tensor adapter_down_w, adapter_down_b, adapter_up_w, adapter_up_b;

  const ExpertBank* bank(ExpertTarget target) const;
  bool has_adapter() const { return adapter_down_w.defined(); }
};

/// z' = LN(MSA(z, m_r)) + z;  z'' = LN(FFN(z')) + z'.
/// Values of reference rows are W_v z_r + m_r; current rows get no mask term.
/// `n_current` rows of z are current tokens; the remaining rows must match
/// m_r's row count.
Tensor encoder_layer(const Tensor& z, const Tensor& mask_tokens, std::size_t n_current,
                     const EncoderLayerParams& layer, std::size_t heads, double ln_eps,
                     const LayerAdaptation* adaptation = nullptr);

/// Stacks encoder layers and returns the current-frame slice z^L_t.
Tensor foundation_forward(const Tensor& z0, const Tensor& mask_tokens, std::size_t n_current,
                          std::span<const EncoderLayerParams> layers, std::size_t heads, double ln_eps,
                          std::span<const LayerAdaptation> adaptations = {});

struct DecoderParams {
  Tensor reduce16_w, reduce16_b;  // [d8, D]
  Tensor conv8_w, conv8_b;        // [3, 3, d8, d8]
  Tensor reduce8_w, reduce8_b;    // [d4, d8]
  Tensor conv4_w, conv4_b;        // [3, 3, d4, d4]
  Tensor head_w, head_b;          // [1, 1, d4, O_max + 1]
};

DecoderParams make_decoder(ParamStore& store, const ModelConfig& cfg, Rng& rng);

/// N_t x D features plus stride-8/4 prompts -> H x W x (objects + 1) logits.
/// Stage 1: linear D->d8, bilinear x2, 3x3 conv, GELU, + p8.
/// Stage 2: linear d8->d4, bilinear x2, 3x3 conv, GELU, + p4.
/// Head: bilinear x4, 1x1 conv to O_max + 1, first objects + 1 channels.
Tensor decode_mask(const Tensor& features, std::size_t grid_h, std::size_t grid_w, const Tensor& p8,
                   const Tensor& p4, std::size_t objects, const DecoderParams& decoder);

}  // namespace xprompt
