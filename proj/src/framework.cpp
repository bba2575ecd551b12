// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/framework.hpp"

#include <algorithm>
#include <cmath>

#include "xprompt/errors.hpp"

namespace xprompt {

using namespace ops;

namespace {

constexpr std::pair<PromptMode, const char*> kPromptNames[] = {
    {PromptMode::rgb_only, "rgb-only"}, {PromptMode::x_only, "x-only"},
    {PromptMode::concat, "concat"},     {PromptMode::mvp, "mvp"}};
constexpr std::pair<AdaptMode, const char*> kAdaptNames[] = {{AdaptMode::frozen, "frozen"},
                                                             {AdaptMode::full_ft, "full-ft"},
                                                             {AdaptMode::adapter, "adapter"},
                                                             {AdaptMode::lora, "lora"},
                                                             {AdaptMode::maes, "maes"}};

}  // namespace

std::string to_string(PromptMode m) {
  for (const auto& [mode, name] : kPromptNames) {
    if (mode == m) return name;
  }
  return "rgb-only";
}

std::string to_string(AdaptMode m) {
  for (const auto& [mode, name] : kAdaptNames) {
    if (mode == m) return name;
  }
  return "frozen";
}

std::string Variant::name() const {
  std::string out = to_string(prompt) + "+" + to_string(adapt);
  if (adapt == AdaptMode::maes && experts != 0) out += "(K=" + std::to_string(experts) + ")";
  return out;
}

Variant Variant::parse(const std::string& text) {
  const auto plus = text.find('+');
  if (plus == std::string::npos) throw ConfigError("variant '" + text + "' is not of the form prompt+adapt");
  const std::string prompt = text.substr(0, plus);
  std::string adapt = text.substr(plus + 1);
  Variant v;
  bool found = false;
  for (const auto& [mode, name] : kPromptNames) {
    if (prompt == name) v.prompt = mode, found = true;
  }
  if (!found) throw ConfigError("variant '" + text + "': unknown prompt mode '" + prompt + "'");

  if (adapt.rfind("maes(K=", 0) == 0 && adapt.back() == ')') {
    const std::string digits = adapt.substr(7, adapt.size() - 8);
    if (digits.empty() || digits.find_first_not_of("0123456789") != std::string::npos) {
      throw ConfigError("variant '" + text + "': bad expert count");
    }
    v.experts = std::stoul(digits);
    if (v.experts < 1 || v.experts > 5) throw ConfigError("variant '" + text + "': expert count must be 1..5");
    adapt = "maes";
  }
  found = false;
  for (const auto& [mode, name] : kAdaptNames) {
    if (adapt == name) v.adapt = mode, found = true;
  }
  if (!found) throw ConfigError("variant '" + text + "': unknown adaptation mode '" + adapt + "'");
  return v;
}

XPromptModel::XPromptModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      init_rng_(Rng::mix(seed, 0)),
      rgb_embed_(store_, "rgb_embed", ParamGroup::rgb_embed, 3, cfg_, init_rng_),
      mask_embed_(store_, cfg_, init_rng_) {
  for (std::size_t l = 0; l < cfg_.layers; ++l) layers_.push_back(make_encoder_layer(store_, l, cfg_, init_rng_));
  decoder_ = make_decoder(store_, cfg_, init_rng_);
  adaptations_.resize(cfg_.layers);
}

void XPromptModel::begin_adaptation(const Variant& variant, std::uint64_t seed) {
  if (adapting_) throw ContractError("begin_adaptation: model is already in the adaptation stage");
  adapting_ = true;
  variant_ = variant;
  if (variant.adapt != AdaptMode::full_ft) {
    for (auto g : {ParamGroup::foundation, ParamGroup::decoder, ParamGroup::rgb_embed}) store_.set_group_frozen(g, true);
  }
  Rng rng(Rng::mix(seed, 101));

  if (variant.uses_x()) {
    x_embed_ = std::make_unique<PatchEmbed>(store_, "x_embed", ParamGroup::x_embed, 1, cfg_, rng);
    // Start from the RGB filters summed over colour channels, so a grey X
    // map is seen as the matching grey frame.
    const auto rgb1 = rgb_embed_.stage_weight(1).values();
    Tensor x1 = x_embed_->stage_weight(1);
    auto dst = x1.mutable_values();
    const std::size_t cout = x1.dim(3);
    for (std::size_t k = 0; k < x1.dim(0) * x1.dim(1); ++k) {
      for (std::size_t o = 0; o < cout; ++o) {
        double s = 0.0;
        for (std::size_t c = 0; c < 3; ++c) s += rgb1[(k * 3 + c) * cout + o];
        dst[k * cout + o] = s;
      }
    }
    for (int stage = 1; stage <= 3; ++stage) {
      if (stage > 1) {
        Tensor w = x_embed_->stage_weight(stage);
        const auto src = rgb_embed_.stage_weight(stage).values();
        std::copy(src.begin(), src.end(), w.mutable_values().begin());
      }
      Tensor b = x_embed_->stage_bias(stage);
      const auto src = rgb_embed_.stage_bias(stage).values();
      std::copy(src.begin(), src.end(), b.mutable_values().begin());
    }
  }

  if (variant.prompt == PromptMode::concat || variant.prompt == PromptMode::mvp) {
    prompter_ = make_prompter(store_, cfg_, rng);
    if (variant.prompt == PromptMode::concat) {
      // No attention gating: those weights exist for a uniform layout but
      // are never used.
      for (const auto& e : std::vector<ParamEntry>(store_.entries())) {
        if (e.name.rfind("prompter.spatial_", 0) == 0 || e.name.rfind("prompter.mlp", 0) == 0) {
          store_.set_frozen(e.name, true);
        }
      }
    }
  }

  switch (variant.adapt) {
    case AdaptMode::frozen:
    case AdaptMode::full_ft: break;
    case AdaptMode::lora: inject_experts(1, cfg_.expert_rank, cfg_.expert_targets, false, Rng::mix(seed, 102)); break;
    case AdaptMode::maes:
      inject_experts(variant.experts ? variant.experts : cfg_.num_experts, cfg_.expert_rank, cfg_.expert_targets,
                     true, Rng::mix(seed, 102));
      break;
    case AdaptMode::adapter: {
      const std::size_t D = cfg_.embed_dim, b = cfg_.adapter_bottleneck;
      for (std::size_t l = 0; l < layers_.size(); ++l) {
        const std::string p = "layer" + std::to_string(l) + ".adapter.";
        auto& a = adaptations_[l];
        a.adapter_down_w = store_.add_normal(p + "down.weight", {b, D}, ParamGroup::experts, rng, 1.0 / std::sqrt(double(D)));
        a.adapter_down_b = store_.add_constant(p + "down.bias", {b}, ParamGroup::experts, 0.0);
        a.adapter_up_w = store_.add_constant(p + "up.weight", {D, b}, ParamGroup::experts, 0.0);
        a.adapter_up_b = store_.add_constant(p + "up.bias", {D}, ParamGroup::experts, 0.0);
      }
      break;
    }
  }
}

ParamReport XPromptModel::inject_experts(std::size_t K, std::size_t r, std::span<const std::string> targets,
                                         bool routed, std::uint64_t seed) {
  std::vector<ExpertTarget> parsed;
  for (const auto& t : targets) parsed.push_back(parse_expert_target(t));
  if (K == 0) return report();
  if (r == 0) throw ConfigError("inject_experts: rank must be positive");
  if (!routed && K != 1) throw ConfigError("inject_experts: an unrouted bank holds exactly one expert");
  const std::size_t D = cfg_.embed_dim, F = cfg_.ffn_mult * cfg_.embed_dim;
  Rng rng(seed);
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& a = adaptations_[l];
    for (auto t : parsed) {
      const std::string prefix = "layer" + std::to_string(l) + "." + std::string(to_string(t));
      std::optional<ExpertBank>* slot = nullptr;
      std::size_t din = D, dout = D;
      switch (t) {
        case ExpertTarget::msa_output: slot = &a.msa_output; break;
        case ExpertTarget::ffn_first: slot = &a.ffn_first, dout = F; break;
        case ExpertTarget::ffn_second: slot = &a.ffn_second, din = F; break;
      }
      if (slot->has_value()) throw ContractError("inject_experts: '" + prefix + "' already carries experts");
      *slot = make_expert_bank(store_, prefix, din, dout, K, r, routed, rng);
    }
  }
  return report();
}

FrameEncoding XPromptModel::encode_frame(const Tensor& rgb, const Tensor* xmap) const {
  FrameEncoding enc;
  const PromptMode mode = adapting_ ? variant_.prompt : PromptMode::rgb_only;
  if (mode != PromptMode::x_only) enc.rgb = rgb_embed_.forward(rgb);
  if (mode != PromptMode::rgb_only) {
    if (xmap == nullptr || !xmap->defined()) throw ContractError("encode_frame: variant needs an X map");
    enc.x = x_embed_->forward(*xmap);
  }
  switch (mode) {
    case PromptMode::rgb_only:
      enc.z0 = enc.rgb.tokens16, enc.p8 = enc.rgb.tokens8, enc.p4 = enc.rgb.tokens4;
      break;
    case PromptMode::x_only:
      enc.z0 = enc.x->tokens16, enc.p8 = enc.x->tokens8, enc.p4 = enc.x->tokens4;
      enc.rgb.grid_h = enc.x->grid_h, enc.rgb.grid_w = enc.x->grid_w;
      break;
    case PromptMode::concat:
    case PromptMode::mvp: {
      enc.z0 = mode == PromptMode::mvp
                   ? prompt_embed(enc.rgb.tokens16, enc.x->tokens16, enc.rgb.grid_h, enc.rgb.grid_w, *prompter_)
                   : fuse_16x(enc.rgb.tokens16, enc.x->tokens16, *prompter_);
      const auto prompts =
          multiscale_prompts(enc.rgb.tokens4, enc.rgb.tokens8, enc.x->tokens4, enc.x->tokens8, *prompter_);
      enc.p8 = prompts.p8, enc.p4 = prompts.p4;
      break;
    }
  }
  return enc;
}

Tensor XPromptModel::mask_tokens(const SegmentationMask& mask, std::size_t objects) const {
  return mask_embed_.forward(mask, objects);
}

Tensor XPromptModel::predict(const FrameEncoding& current, std::span<const Reference> refs,
                             std::size_t objects) const {
  if (refs.empty()) throw ContractError("predict: at least one reference frame is required");
  std::vector<Tensor> tokens{current.z0}, masks;
  for (const auto& r : refs) {
    tokens.push_back(r.frame->z0);
    masks.push_back(r.mask_tokens);
  }
  const Tensor z0 = concat(std::span<const Tensor>(tokens), 0);
  const Tensor m = concat(std::span<const Tensor>(masks), 0);
  const Tensor features = foundation_forward(z0, m, current.z0.dim(0), layers_, cfg_.heads, cfg_.ln_eps,
                                             adaptations_);
  return decode_mask(features, current.rgb.grid_h, current.rgb.grid_w, current.p8, current.p4, objects, decoder_);
}

std::vector<SegmentationMask> XPromptModel::segment_video(const VideoSample& sample,
                                                          const SegmentationMask& first_mask) const {
  if (sample.length() == 0) throw ContractError("segment_video: empty video");
  if (first_mask.height != sample.height() || first_mask.width != sample.width()) {
    throw ContractError("segment_video: first mask dims differ from the video");
  }
  NoGradGuard no_grad;
  const bool with_x = adapting_ && variant_.uses_x();
  auto encode = [&](std::size_t t) { return encode_frame(sample.frames[t], with_x ? &sample.xmaps[t] : nullptr); };

  std::vector<SegmentationMask> out{first_mask};
  const FrameEncoding first = encode(0);
  const Tensor first_tokens = mask_tokens(first_mask, sample.objects);
  std::optional<FrameEncoding> previous;
  Tensor previous_tokens;
  for (std::size_t t = 1; t < sample.length(); ++t) {
    FrameEncoding current = encode(t);
    const Reference refs[2] = {{&first, first_tokens},
                               previous ? Reference{&*previous, previous_tokens} : Reference{&first, first_tokens}};
    out.push_back(argmax_mask(predict(current, refs, sample.objects)));
    previous = std::move(current);
    previous_tokens = mask_tokens(out.back(), sample.objects);
  }
  return out;
}

}  // namespace xprompt
