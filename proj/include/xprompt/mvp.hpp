// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-modal visual prompter. RGB and X stride-16 tokens are fused by a
// 2D -> D linear layer and gated by a spatial map (channel-pooled, two 7x7
// convs) times a channel vector (spatially pooled, one shared MLP). Stride-4
// and stride-8 tokens become decoder prompts through residual linear
// adapters.

#pragma once

#include <cstddef>

#include "xprompt/config.hpp"
#include "xprompt/param_store.hpp"
#include "xprompt/tensor.hpp"

namespace xprompt {

struct PrompterParams {
  Tensor fuse_w, fuse_b;                  // [D, 2D], [D]
  Tensor spatial_avg_w, spatial_avg_b;    // [k, k, 1, 1], [1]
  Tensor spatial_max_w, spatial_max_b;    // [k, k, 1, 1], [1]
  Tensor mlp1_w, mlp1_b, mlp2_w, mlp2_b;  // [D/16, D] ... [D, D/16]
  Tensor adapter4_w, adapter4_b;          // [d4, 2 d4], [d4]
  Tensor adapter8_w, adapter8_b;          // [d8, 2 d8], [d8]
};

/// Registers prompter parameters under "prompter.*". The fuse layer starts
/// as an RGB selector ([I | N(0, 1e-3^2)], zero bias) and the decoder
/// adapters start at zero.
PrompterParams make_prompter(ParamStore& store, const ModelConfig& cfg, Rng& rng);

/// concat(z_rgb16, z_x16) along features, then the 2D -> D linear layer.
Tensor fuse_16x(const Tensor& rgb16, const Tensor& x16, const PrompterParams& p);

/// Grid h x w x D -> h x w x 1 in (0, 1).
Tensor spatial_attention(const Tensor& grid, const PrompterParams& p);

/// Grid h x w x D -> D in (0, 1).
Tensor channel_attention(const Tensor& grid, const PrompterParams& p);

/// (A_s x A_c) * fuse(z_rgb16, z_x16) for one frame's N = grid_h * grid_w
/// tokens; returns N x D.
Tensor prompt_embed(const Tensor& rgb16, const Tensor& x16, std::size_t grid_h, std::size_t grid_w,
                    const PrompterParams& p);

struct DecoderPrompts {
  Tensor p4;  // H/4 x W/4 x d4
  Tensor p8;  // H/8 x W/8 x d8
};

/// p_s = z_rgb_s + adapter_s(concat(z_rgb_s, z_x_s)) for s in {4, 8}.
DecoderPrompts multiscale_prompts(const Tensor& rgb4, const Tensor& rgb8, const Tensor& x4, const Tensor& x8,
                                  const PrompterParams& p);

}  // namespace xprompt
