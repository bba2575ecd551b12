// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/mvp.hpp"

#include <cmath>

#include "xprompt/errors.hpp"

namespace xprompt {

using namespace ops;

PrompterParams make_prompter(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  const std::size_t D = cfg.embed_dim, k = cfg.prompter_kernel, hidden = cfg.mlp_hidden();
  const std::size_t d4 = cfg.stage4_dim(), d8 = cfg.stage8_dim();
  const auto g = ParamGroup::prompter;
  PrompterParams p;

  std::vector<double> fuse(D * 2 * D, 0.0);
  for (std::size_t o = 0; o < D; ++o) {
    fuse[o * 2 * D + o] = 1.0;
    for (std::size_t i = D; i < 2 * D; ++i) fuse[o * 2 * D + i] = rng.normal(0.0, 1e-3);
  }
  p.fuse_w = store.add("prompter.fuse.weight", Tensor::from({D, 2 * D}, std::move(fuse)), g);
  p.fuse_b = store.add_constant("prompter.fuse.bias", {D}, g, 0.0);

  const double conv_std = 1.0 / static_cast<double>(k);
  p.spatial_avg_w = store.add_normal("prompter.spatial_avg.weight", {k, k, 1, 1}, g, rng, conv_std);
  p.spatial_avg_b = store.add_constant("prompter.spatial_avg.bias", {1}, g, 0.0);
  p.spatial_max_w = store.add_normal("prompter.spatial_max.weight", {k, k, 1, 1}, g, rng, conv_std);
  p.spatial_max_b = store.add_constant("prompter.spatial_max.bias", {1}, g, 0.0);

  p.mlp1_w = store.add_normal("prompter.mlp1.weight", {hidden, D}, g, rng, 1.0 / std::sqrt(double(D)));
  p.mlp1_b = store.add_constant("prompter.mlp1.bias", {hidden}, g, 0.0);
  p.mlp2_w = store.add_normal("prompter.mlp2.weight", {D, hidden}, g, rng, 1.0 / std::sqrt(double(hidden)));
  p.mlp2_b = store.add_constant("prompter.mlp2.bias", {D}, g, 0.0);

  p.adapter4_w = store.add_constant("prompter.adapter4.weight", {d4, 2 * d4}, g, 0.0);
  p.adapter4_b = store.add_constant("prompter.adapter4.bias", {d4}, g, 0.0);
  p.adapter8_w = store.add_constant("prompter.adapter8.weight", {d8, 2 * d8}, g, 0.0);
  p.adapter8_b = store.add_constant("prompter.adapter8.bias", {d8}, g, 0.0);
  return p;
}

Tensor fuse_16x(const Tensor& rgb16, const Tensor& x16, const PrompterParams& p) {
  if (rgb16.shape() != x16.shape()) {
    throw ContractError("fuse_16x: token count mismatch " + shape_str(rgb16.shape()) + " vs " +
                        shape_str(x16.shape()));
  }
  return linear(concat({rgb16, x16}, rgb16.rank() - 1), p.fuse_w, p.fuse_b);
}

Tensor spatial_attention(const Tensor& grid, const PrompterParams& p) {
  const Conv2dAttrs same{1, p.spatial_avg_w.dim(0) / 2};
  const Tensor from_avg = conv2d(channel_avg_pool(grid), p.spatial_avg_w, p.spatial_avg_b, same);
  const Tensor from_max = conv2d(channel_max_pool(grid), p.spatial_max_w, p.spatial_max_b, same);
  return sigmoid(add(from_avg, from_max));
}

Tensor channel_attention(const Tensor& grid, const PrompterParams& p) {
  auto mlp = [&p](const Tensor& v) { return linear(relu(linear(v, p.mlp1_w, p.mlp1_b)), p.mlp2_w, p.mlp2_b); };
  return sigmoid(add(mlp(global_avg_pool(grid)), mlp(global_max_pool(grid))));
}

Tensor prompt_embed(const Tensor& rgb16, const Tensor& x16, std::size_t grid_h, std::size_t grid_w,
                    const PrompterParams& p) {
  const Tensor fused = fuse_16x(rgb16, x16, p);
  const std::size_t D = fused.dim(1);
  if (fused.dim(0) != grid_h * grid_w) {
    throw ContractError("prompt_embed: " + std::to_string(fused.dim(0)) + " tokens do not form a " +
                        std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
  }
  const Tensor grid = reshape(fused, {grid_h, grid_w, D});
  const Tensor a_s = spatial_attention(grid, p);
  const Tensor a_c = channel_attention(grid, p);
  const Tensor attended = mul(mul_trailing(grid, a_c), expand_last(a_s, D));
  return reshape(attended, {grid_h * grid_w, D});
}

DecoderPrompts multiscale_prompts(const Tensor& rgb4, const Tensor& rgb8, const Tensor& x4, const Tensor& x8,
                                  const PrompterParams& p) {
  if (rgb4.shape() != x4.shape() || rgb8.shape() != x8.shape()) {
    throw ContractError("multiscale_prompts: modality shapes differ: " + shape_str(rgb4.shape()) + "/" +
                        shape_str(x4.shape()) + ", " + shape_str(rgb8.shape()) + "/" + shape_str(x8.shape()));
  }
  DecoderPrompts out;
  out.p4 = add(rgb4, linear(concat({rgb4, x4}, 2), p.adapter4_w, p.adapter4_b));
  out.p8 = add(rgb8, linear(concat({rgb8, x8}, 2), p.adapter8_w, p.adapter8_b));
  return out;
}

}  // namespace xprompt
