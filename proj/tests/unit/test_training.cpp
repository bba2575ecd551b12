// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <numeric>

#include "test_util.hpp"
#include "xprompt/checkpoint.hpp"
#include "xprompt/errors.hpp"
#include "xprompt/synth.hpp"
#include "xprompt/training.hpp"

namespace xprompt {
namespace {

ModelConfig small_model() {
  ModelConfig m;
  m.embed_dim = 32;
  m.layers = 1;
  return m;
}

SynthConfig small_synth(std::size_t n, std::uint64_t seed, Corruption c = Corruption::none) {
  SynthConfig s;
  s.num_sequences = n;
  s.frames = 4;
  s.height = s.width = 32;
  s.min_size = 8.0;
  s.max_size = 14.0;
  s.max_objects = 1;
  s.corruption = c;
  s.severity = c == Corruption::none ? 0.0 : 0.9;
  s.seed = seed;
  return s;
}

double mean_of(const std::vector<double>& v, std::size_t from, std::size_t to) {
  return std::accumulate(v.begin() + long(from), v.begin() + long(to), 0.0) / double(to - from);
}

std::map<std::string, std::vector<std::uint8_t>> frozen_bytes(const ParamStore& store) {
  std::map<std::string, std::vector<std::uint8_t>> out;
  for (const auto& e : store.entries())
    if (e.frozen) out[e.name] = encode_f32(e.tensor.values());
  return out;
}

TEST(Variant, NamesRoundTrip) {
  for (const char* name : {"rgb-only+frozen", "mvp+maes", "concat+lora", "x-only+full-ft", "mvp+adapter",
                           "mvp+maes(K=3)"}) {
    EXPECT_EQ(Variant::parse(name).name(), name);
  }
  EXPECT_EQ(Variant::parse("mvp+maes(K=3)").experts, 3u);
  EXPECT_THROW(Variant::parse("mvp"), ConfigError);
  EXPECT_THROW(Variant::parse("rgbx+maes"), ConfigError);
  EXPECT_THROW(Variant::parse("mvp+maes(K=9)"), ConfigError);
}

TEST(Training, PretrainLossDecreases) {
  XPromptModel model(small_model(), 1);
  TrainConfig cfg;
  cfg.pretrain_steps = 600;
  cfg.pretrain_lr = 2e-3;
  cfg.keep_ratio_final = 1.0;
  const TrainLog log = pretrain(model, synth_generate(small_synth(8, 2)), cfg, 3);
  ASSERT_EQ(log.losses.size(), 600u);
  EXPECT_LT(mean_of(log.losses, 540, 600), 0.6 * mean_of(log.losses, 0, 60));
}

TEST(Training, StepLossesAreSeedDeterministic) {
  const auto data = synth_generate(small_synth(4, 4));
  TrainConfig cfg;
  cfg.pretrain_steps = 10;
  auto run = [&](std::uint64_t seed) {
    XPromptModel model(small_model(), seed);
    return pretrain(model, data, cfg, seed).losses;
  };
  const auto a = run(5), b = run(5), c = run(6);
  EXPECT_TRUE(testing::bit_equal(a, b));
  EXPECT_FALSE(testing::bit_equal(a, c));
}

TEST(Training, AdaptationNeverTouchesFrozenBytes) {
  const auto data = synth_generate(small_synth(4, 5, Corruption::low_contrast));
  for (const char* name : {"mvp+maes", "concat+lora", "mvp+adapter", "x-only+frozen"}) {
    XPromptModel model(small_model(), 6);
    model.begin_adaptation(Variant::parse(name), 7);
    const auto before = frozen_bytes(model.params());
    TrainConfig cfg;
    cfg.adapt_steps = 15;
    train(model, data, cfg.adapt_steps, cfg.adapt_lr, cfg, 8);
    EXPECT_EQ(frozen_bytes(model.params()), before) << name;
    EXPECT_FALSE(before.empty());
  }
}

TEST(Training, AdaptRequiresPretrainStageAndFreezesFoundation) {
  XPromptModel model(ModelConfig{}, 9);
  const auto total = model.report().total;
  EXPECT_EQ(model.report().trainable, total);
  model.begin_adaptation(Variant::parse("mvp+maes"), 10);
  const auto r = model.report();
  EXPECT_EQ(r.trainable_foundation, 0u);
  EXPECT_GT(r.experts, 0u);
  EXPECT_GT(r.prompter, 0u);
  EXPECT_EQ(r.trainable, r.experts + r.prompter + r.x_embed);
  // Closed-form group sizes for D = 64, hidden 4, stage widths 32 and 16.
  const std::size_t D = 64, h = 4, d8 = 32, d4 = 16;
  EXPECT_EQ(r.prompter, (2 * D * D + D) + 2 * (49 + 1) + (D * h + h + h * D + D) + (2 * d8 * d8 + d8) +
                            (2 * d4 * d4 + d4));
  EXPECT_EQ(r.x_embed, (49 * d4 + d4) + (4 * d4 * d8 + d8) + (4 * d8 * D + D));
  EXPECT_THROW(model.begin_adaptation(Variant::parse("mvp+maes"), 10), ContractError);

  XPromptModel ft(small_model(), 9);
  ft.begin_adaptation(Variant::parse("rgb-only+full-ft"), 10);
  EXPECT_EQ(ft.report().trainable, ft.report().total);
}

TEST(Training, LowContrastAdaptationLossDecreases) {
  const auto data = synth_generate(small_synth(8, 11, Corruption::low_contrast));
  XPromptModel model(small_model(), 12);
  TrainConfig cfg;
  cfg.pretrain_steps = 100;
  cfg.keep_ratio_final = 1.0;
  pretrain(model, synth_generate(small_synth(8, 13)), cfg, 12);
  cfg.adapt_steps = 200;
  const TrainLog log = adapt(model, data, Variant::parse("mvp+maes"), cfg, 14);
  ASSERT_EQ(log.losses.size(), 200u);
  EXPECT_LT(mean_of(log.losses, 170, 200), 0.8 * mean_of(log.losses, 0, 30));
  EXPECT_EQ(log.ignored_frozen, 0u);
}

TEST(Training, ClipLossContracts) {
  XPromptModel model(small_model(), 15);
  const auto sample = synth_sequence(small_synth(1, 16), 0);
  EXPECT_THROW(clip_loss(model, sample, 3, 3, 1.0), ContractError);
  EXPECT_TRUE(std::isfinite(clip_loss(model, sample, 0, 3, 1.0).item()));
}

TEST(Training, SavedModelReloadsAtTheSameStage) {
  testing::TempDir dir("model");
  XPromptModel model(small_model(), 17);
  save_model(dir.str(), model);
  const auto back = load_model(dir.str());
  EXPECT_FALSE(back->adapting());
  EXPECT_EQ(back->report().total, model.report().total);
  EXPECT_THROW(load_model(dir.sub("absent")), IoError);
}

}  // namespace
}  // namespace xprompt
