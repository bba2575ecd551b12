// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/foundation.hpp"

#include <cmath>

#include "xprompt/errors.hpp"

namespace xprompt {

using namespace ops;

namespace {

double fan_in_std(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

Tensor conv_weight(ParamStore& store, const std::string& name, ParamGroup group, std::size_t k, std::size_t cin,
                   std::size_t cout, Rng& rng) {
  return store.add_normal(name, {k, k, cin, cout}, group, rng, fan_in_std(k * k * cin));
}

Tensor linear_weight(ParamStore& store, const std::string& name, ParamGroup group, std::size_t in,
                     std::size_t out, Rng& rng) {
  return store.add_normal(name, {out, in}, group, rng, fan_in_std(in));
}

}  // namespace

// ---------------------------------------------------------------------------
// Patch embedding

PatchEmbed::PatchEmbed(ParamStore& store, const std::string& prefix, ParamGroup group, std::size_t in_channels,
                       const ModelConfig& cfg, Rng& rng)
    : in_channels_(in_channels) {
  const std::size_t d4 = cfg.stage4_dim(), d8 = cfg.stage8_dim(), D = cfg.embed_dim;
  w1_ = conv_weight(store, prefix + ".stage1.weight", group, 7, in_channels, d4, rng);
  b1_ = store.add_constant(prefix + ".stage1.bias", {d4}, group, 0.0);
  w2_ = conv_weight(store, prefix + ".stage2.weight", group, 2, d4, d8, rng);
  b2_ = store.add_constant(prefix + ".stage2.bias", {d8}, group, 0.0);
  w3_ = conv_weight(store, prefix + ".stage3.weight", group, 2, d8, D, rng);
  b3_ = store.add_constant(prefix + ".stage3.bias", {D}, group, 0.0);
}

PatchTokens PatchEmbed::forward(const Tensor& image) const {
  if (image.rank() != 3 || image.dim(2) != in_channels_) {
    throw ContractError("patch_embed: expected H x W x " + std::to_string(in_channels_) + " input, got " +
                        shape_str(image.shape()));
  }
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (h % 16 != 0 || w % 16 != 0) {
    throw ContractError("patch_embed: frame " + std::to_string(h) + "x" + std::to_string(w) +
                        " is not divisible by 16");
  }
  PatchTokens out;
  out.tokens4 = gelu(conv2d(image, w1_, b1_, {4, 3}));
  out.tokens8 = gelu(conv2d(out.tokens4, w2_, b2_, {2, 0}));
  const Tensor grid16 = conv2d(out.tokens8, w3_, b3_, {2, 0});
  out.grid_h = grid16.dim(0);
  out.grid_w = grid16.dim(1);
  out.tokens16 = reshape(grid16, {out.grid_h * out.grid_w, grid16.dim(2)});
  return out;
}

Tensor PatchEmbed::stage_weight(int stage) const {
  switch (stage) {
    case 1: return w1_;
    case 2: return w2_;
    case 3: return w3_;
  }
  throw ContractError("patch_embed: stage must be 1, 2 or 3");
}

Tensor PatchEmbed::stage_bias(int stage) const {
  switch (stage) {
    case 1: return b1_;
    case 2: return b2_;
    case 3: return b3_;
  }
  throw ContractError("patch_embed: stage must be 1, 2 or 3");
}

// ---------------------------------------------------------------------------
// Mask embedding

Tensor mask_planes(const SegmentationMask& mask, std::size_t max_objects) {
  std::vector<double> planes(mask.height * mask.width * max_objects, 0.0);
  for (std::size_t p = 0; p < mask.ids.size(); ++p) {
    const std::size_t id = mask.ids[p];
    if (id > max_objects) throw ContractError("mask_planes: object id " + std::to_string(id) + " exceeds O_max");
    if (id > 0) planes[p * max_objects + id - 1] = 1.0;
  }
  return Tensor::from({mask.height, mask.width, max_objects}, std::move(planes));
}

MaskEmbed::MaskEmbed(ParamStore& store, const ModelConfig& cfg, Rng& rng) : max_objects_(cfg.max_objects) {
  // Scaled so a fully covered patch yields unit-variance tokens.
  w_ = store.add_normal("mask_embed.weight", {16, 16, max_objects_, cfg.embed_dim}, ParamGroup::foundation, rng,
                        1.0 / 16.0);
  b_ = store.add_constant("mask_embed.bias", {cfg.embed_dim}, ParamGroup::foundation, 0.0);
}

Tensor MaskEmbed::forward(const SegmentationMask& mask, std::size_t objects) const {
  if (objects > max_objects_) {
    throw ContractError("mask_embed: " + std::to_string(objects) + " objects exceed O_max = " +
                        std::to_string(max_objects_));
  }
  if (mask.height % 16 != 0 || mask.width % 16 != 0 || mask.height == 0 || mask.width == 0) {
    throw ContractError("mask_embed: mask dims must be positive multiples of 16");
  }
  if (mask.max_id() > objects) throw ContractError("mask_embed: mask id exceeds declared object count");
  const Tensor grid = conv2d(mask_planes(mask, max_objects_), w_, b_, {16, 0});
  return reshape(grid, {grid.dim(0) * grid.dim(1), grid.dim(2)});
}

// ---------------------------------------------------------------------------
// Encoder

EncoderLayerParams make_encoder_layer(ParamStore& store, std::size_t index, const ModelConfig& cfg, Rng& rng) {
  const std::string p = "encoder.layer" + std::to_string(index) + ".";
  const std::size_t D = cfg.embed_dim, F = cfg.ffn_mult * cfg.embed_dim;
  const auto g = ParamGroup::foundation;
  EncoderLayerParams l;
  l.q_w = linear_weight(store, p + "q.weight", g, D, D, rng);
  l.q_b = store.add_constant(p + "q.bias", {D}, g, 0.0);
  l.k_w = linear_weight(store, p + "k.weight", g, D, D, rng);
  l.k_b = store.add_constant(p + "k.bias", {D}, g, 0.0);
  l.v_w = linear_weight(store, p + "v.weight", g, D, D, rng);
  l.v_b = store.add_constant(p + "v.bias", {D}, g, 0.0);
  l.out_w = linear_weight(store, p + "out.weight", g, D, D, rng);
  l.out_b = store.add_constant(p + "out.bias", {D}, g, 0.0);
  l.ln1_g = store.add_constant(p + "ln1.gamma", {D}, g, 1.0);
  l.ln1_b = store.add_constant(p + "ln1.beta", {D}, g, 0.0);
  l.ffn1_w = linear_weight(store, p + "ffn1.weight", g, D, F, rng);
  l.ffn1_b = store.add_constant(p + "ffn1.bias", {F}, g, 0.0);
  l.ffn2_w = linear_weight(store, p + "ffn2.weight", g, F, D, rng);
  l.ffn2_b = store.add_constant(p + "ffn2.bias", {D}, g, 0.0);
  l.ln2_g = store.add_constant(p + "ln2.gamma", {D}, g, 1.0);
  l.ln2_b = store.add_constant(p + "ln2.beta", {D}, g, 0.0);
  return l;
}

const ExpertBank* LayerAdaptation::bank(ExpertTarget target) const {
  const std::optional<ExpertBank>* slot = nullptr;
  switch (target) {
    case ExpertTarget::msa_output: slot = &msa_output; break;
    case ExpertTarget::ffn_first: slot = &ffn_first; break;
    case ExpertTarget::ffn_second: slot = &ffn_second; break;
  }
  return slot && slot->has_value() ? &slot->value() : nullptr;
}

Tensor encoder_layer(const Tensor& z, const Tensor& mask_tokens, std::size_t n_current,
                     const EncoderLayerParams& layer, std::size_t heads, double ln_eps,
                     const LayerAdaptation* adaptation) {
  if (z.rank() != 2) throw ContractError("encoder_layer: tokens must be N x D, got " + shape_str(z.shape()));
  const std::size_t n = z.dim(0), D = z.dim(1);
  const std::size_t n_ref = mask_tokens.defined() ? mask_tokens.dim(0) : 0;
  if (n_current + n_ref != n || (mask_tokens.defined() && mask_tokens.dim(1) != D)) {
    throw ContractError("encoder_layer: mask embedding " +
                        (mask_tokens.defined() ? shape_str(mask_tokens.shape()) : std::string("[]")) +
                        " does not match the reference segment of " + shape_str(z.shape()) + " with " +
                        std::to_string(n_current) + " current tokens");
  }
  auto bank = [adaptation](ExpertTarget t) { return adaptation ? adaptation->bank(t) : nullptr; };

  const Tensor q = linear(z, layer.q_w, layer.q_b);
  const Tensor k = linear(z, layer.k_w, layer.k_b);
  Tensor v = linear(z, layer.v_w, layer.v_b);
  if (n_ref > 0) {
    const Tensor mask_rows = n_current > 0 ? concat({Tensor::zeros({n_current, D}), mask_tokens}, 0) : mask_tokens;
    v = add(v, mask_rows);
  }
  const Tensor attended = multi_head_attention(q, k, v, heads);
  const Tensor msa = adapted_linear(attended, layer.out_w, layer.out_b, bank(ExpertTarget::msa_output));
  const Tensor z1 = add(layer_norm(msa, layer.ln1_g, layer.ln1_b, ln_eps), z);

  const Tensor hidden = gelu(adapted_linear(z1, layer.ffn1_w, layer.ffn1_b, bank(ExpertTarget::ffn_first)));
  const Tensor ffn = adapted_linear(hidden, layer.ffn2_w, layer.ffn2_b, bank(ExpertTarget::ffn_second));
  Tensor z2 = add(layer_norm(ffn, layer.ln2_g, layer.ln2_b, ln_eps), z1);

  if (adaptation && adaptation->has_adapter()) {
    const Tensor down = gelu(linear(z2, adaptation->adapter_down_w, adaptation->adapter_down_b));
    z2 = add(z2, linear(down, adaptation->adapter_up_w, adaptation->adapter_up_b));
  }
  return z2;
}

Tensor foundation_forward(const Tensor& z0, const Tensor& mask_tokens, std::size_t n_current,
                          std::span<const EncoderLayerParams> layers, std::size_t heads, double ln_eps,
                          std::span<const LayerAdaptation> adaptations) {
  if (!adaptations.empty() && adaptations.size() != layers.size()) {
    throw ContractError("foundation_forward: adaptation count does not match layer count");
  }
  if (n_current == 0 || n_current > z0.dim(0)) throw ContractError("foundation_forward: bad current-token count");
  Tensor z = z0;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    z = encoder_layer(z, mask_tokens, n_current, layers[l], heads, ln_eps,
                      adaptations.empty() ? nullptr : &adaptations[l]);
  }
  return slice(z, 0, 0, n_current);
}

// ---------------------------------------------------------------------------
// Decoder

DecoderParams make_decoder(ParamStore& store, const ModelConfig& cfg, Rng& rng) {
  const std::size_t D = cfg.embed_dim, d8 = cfg.stage8_dim(), d4 = cfg.stage4_dim();
  const auto g = ParamGroup::decoder;
  DecoderParams d;
  d.reduce16_w = linear_weight(store, "decoder.reduce16.weight", g, D, d8, rng);
  d.reduce16_b = store.add_constant("decoder.reduce16.bias", {d8}, g, 0.0);
  d.conv8_w = conv_weight(store, "decoder.conv8.weight", g, 3, d8, d8, rng);
  d.conv8_b = store.add_constant("decoder.conv8.bias", {d8}, g, 0.0);
  d.reduce8_w = linear_weight(store, "decoder.reduce8.weight", g, d8, d4, rng);
  d.reduce8_b = store.add_constant("decoder.reduce8.bias", {d4}, g, 0.0);
  d.conv4_w = conv_weight(store, "decoder.conv4.weight", g, 3, d4, d4, rng);
  d.conv4_b = store.add_constant("decoder.conv4.bias", {d4}, g, 0.0);
  d.head_w = conv_weight(store, "decoder.head.weight", g, 1, d4, cfg.max_objects + 1, rng);
  d.head_b = store.add_constant("decoder.head.bias", {cfg.max_objects + 1}, g, 0.0);
  return d;
}

Tensor decode_mask(const Tensor& features, std::size_t grid_h, std::size_t grid_w, const Tensor& p8,
                   const Tensor& p4, std::size_t objects, const DecoderParams& decoder) {
  if (features.rank() != 2 || features.dim(0) != grid_h * grid_w) {
    throw ContractError("decode_mask: features " + shape_str(features.shape()) + " do not form a " +
                        std::to_string(grid_h) + "x" + std::to_string(grid_w) + " grid");
  }
  const std::size_t d8 = decoder.reduce16_w.dim(0), d4 = decoder.reduce8_w.dim(0);
  if (p8.shape() != Shape{2 * grid_h, 2 * grid_w, d8} || p4.shape() != Shape{4 * grid_h, 4 * grid_w, d4}) {
    throw ContractError("decode_mask: scale mismatch: p8 " + shape_str(p8.shape()) + ", p4 " +
                        shape_str(p4.shape()) + " for a " + std::to_string(grid_h) + "x" + std::to_string(grid_w) +
                        " token grid");
  }
  const std::size_t channels = decoder.head_w.dim(3);
  if (objects + 1 > channels) throw ContractError("decode_mask: object count exceeds O_max");

  Tensor x = reshape(features, {grid_h, grid_w, features.dim(1)});
  x = upsample_bilinear(linear(x, decoder.reduce16_w, decoder.reduce16_b), 2);
  x = add(gelu(conv2d(x, decoder.conv8_w, decoder.conv8_b, {1, 1})), p8);
  x = upsample_bilinear(linear(x, decoder.reduce8_w, decoder.reduce8_b), 2);
  x = add(gelu(conv2d(x, decoder.conv4_w, decoder.conv4_b, {1, 1})), p4);
  x = conv2d(upsample_bilinear(x, 4), decoder.head_w, decoder.head_b, {1, 0});
  return objects + 1 == channels ? x : slice(x, 2, 0, objects + 1);
}

}  // namespace xprompt
