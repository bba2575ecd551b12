// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "test_util.hpp"
#include "xprompt/checkpoint.hpp"
#include "xprompt/dataset_io.hpp"
#include "xprompt/errors.hpp"
#include "xprompt/synth.hpp"
#include "xprompt/training.hpp"

namespace xprompt {
namespace {

SynthConfig small_synth(std::uint64_t seed) {
  SynthConfig c;
  c.num_sequences = 3;
  c.frames = 4;
  c.seed = seed;
  return c;
}

bool same_sample(const VideoSample& a, const VideoSample& b) {
  if (a.name != b.name || a.objects != b.objects || a.length() != b.length() || a.masks != b.masks) return false;
  for (std::size_t t = 0; t < a.length(); ++t) {
    if (!testing::bit_equal(a.frames[t], b.frames[t]) || !testing::bit_equal(a.xmaps[t], b.xmaps[t])) return false;
  }
  return true;
}

TEST(Synth, DeterministicPerSeed) {
  const auto a = synth_generate(small_synth(5));
  const auto b = synth_generate(small_synth(5));
  const auto c = synth_generate(small_synth(6));
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_TRUE(same_sample(a[i], b[i]));
  EXPECT_FALSE(same_sample(a[0], c[0]));
  // A sequence does not depend on how many others are generated with it.
  EXPECT_TRUE(same_sample(a[2], synth_sequence(small_synth(5), 2)));
}

TEST(Synth, SamplesAreWellFormed) {
  auto cfg = small_synth(7);
  cfg.num_sequences = 10;
  for (const auto& s : synth_generate(cfg)) {
    EXPECT_NO_THROW(s.validate());
    EXPECT_EQ(s.length(), 4u);
    EXPECT_GE(s.objects, 1u);
    EXPECT_LE(s.objects, 2u);
    EXPECT_GT(s.masks[0].count(1), 0u);
    EXPECT_LE(s.masks[0].max_id(), s.objects);
    for (const auto& f : s.frames) {
      EXPECT_EQ(f.shape(), (Shape{64, 64, 3}));
      for (double v : f.values()) {
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
      }
    }
  }
}

TEST(Synth, ThermalMapAgreesWithMasks) {
  // Objects are hot (>= 0.75) and the background cool (<= 0.15); noise is
  // far smaller than the gap, so thresholding the map recovers the mask.
  auto cfg = small_synth(8);
  cfg.num_sequences = 6;
  for (const auto& s : synth_generate(cfg)) {
    for (std::size_t t = 0; t < s.length(); ++t) {
      const Tensor x = s.xmaps[t];
      for (std::size_t p = 0; p < s.masks[t].ids.size(); ++p) {
        EXPECT_EQ(x.values()[p] > 0.45, s.masks[t].ids[p] != 0);
      }
    }
  }
}

TEST(Synth, LowContrastHidesObjectsInRgbButNotInX) {
  auto cfg = small_synth(9);
  cfg.num_sequences = 6;
  cfg.corruption = Corruption::low_contrast;
  cfg.severity = 1.0;
  for (const auto& s : synth_generate(cfg)) {
    for (std::size_t t = 0; t < s.length(); ++t) {
      const auto [rf, rb] = rgb_object_background_means(s, t);
      const auto [xf, xb] = x_object_background_means(s, t);
      EXPECT_LT(std::abs(rf - rb), 0.02);
      EXPECT_GT(xf - xb, 0.5);
    }
  }
  cfg.corruption = Corruption::none;
  cfg.severity = 0.0;
  double gap = 0.0;
  for (const auto& s : synth_generate(cfg)) {
    const auto [rf, rb] = rgb_object_background_means(s, 0);
    gap += std::abs(rf - rb) / 6.0;
  }
  EXPECT_GT(gap, 0.05);
}

TEST(Synth, DarknessDimsFrames) {
  auto cfg = small_synth(10);
  const auto clean = synth_generate(cfg);
  cfg.corruption = Corruption::darkness;
  cfg.severity = 1.0;
  const auto dark = synth_generate(cfg);
  for (std::size_t i = 0; i < clean.size(); ++i) {
    double a = 0, b = 0;
    for (double v : clean[i].frames[0].values()) a += v;
    for (double v : dark[i].frames[0].values()) b += v;
    EXPECT_LT(b, 0.25 * a);
    EXPECT_EQ(clean[i].masks, dark[i].masks);
  }
}

TEST(Synth, ImpossibleGeometryIsRejected) {
  auto cfg = small_synth(1);
  cfg.height = cfg.width = 16;
  EXPECT_THROW(synth_generate(cfg), ContractError);
  cfg = small_synth(1);
  cfg.height = 60;
  EXPECT_THROW(synth_generate(cfg), ConfigError);
  cfg = small_synth(1);
  cfg.severity = 1.5;
  EXPECT_THROW(synth_generate(cfg), ConfigError);
}

TEST(DatasetIo, ImagesRoundTripLosslessly) {
  testing::TempDir dir("io");
  const auto s = synth_sequence(small_synth(11), 0);
  write_ppm(dir.sub("f.ppm"), s.frames[0]);
  write_pgm(dir.sub("x.pgm"), s.xmaps[0]);
  write_mask_pgm(dir.sub("m.pgm"), s.masks[0]);
  EXPECT_TRUE(testing::bit_equal(read_ppm(dir.sub("f.ppm")), s.frames[0]));
  EXPECT_TRUE(testing::bit_equal(read_pgm(dir.sub("x.pgm")), s.xmaps[0]));
  EXPECT_EQ(read_mask_pgm(dir.sub("m.pgm")), s.masks[0]);
}

TEST(DatasetIo, DatasetRoundTrip) {
  testing::TempDir dir("ds");
  const auto data = synth_generate(small_synth(12));
  save_dataset(dir.str(), data);
  const auto back = load_dataset(dir.str());
  ASSERT_EQ(back.size(), data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    EXPECT_TRUE(same_sample(data[i], back[i]));
    EXPECT_EQ(back[i].scenario, data[i].scenario);
  }
}

TEST(DatasetIo, MissingOrBrokenFilesRaiseIoError) {
  testing::TempDir dir("bad");
  EXPECT_THROW(read_ppm(dir.sub("none.ppm")), IoError);
  EXPECT_THROW(load_dataset(dir.sub("nowhere")), IoError);
  std::ofstream(dir.sub("junk.ppm")) << "P6\n4 4\n255\nxx";
  EXPECT_THROW(read_ppm(dir.sub("junk.ppm")), IoError);
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.embed_dim = 32;
  m.layers = 1;
  return m;
}

TEST(Checkpoint, RoundTripReproducesPredictions) {
  testing::TempDir dir("ckpt");
  XPromptModel model(tiny_model(), 3);
  model.begin_adaptation(Variant::parse("mvp+maes"), 4);
  // Move the zero-initialized parts off zero so they matter.
  Rng rng(5);
  for (const auto& e : model.params().entries())
    for (double& v : testing::mut(e.tensor)) v += 0.01 * rng.normal();
  model.params().round_to_f32();
  save_model(dir.str(), model);
  const auto loaded = load_model(dir.str());
  EXPECT_EQ(loaded->variant(), model.variant());
  EXPECT_EQ(loaded->report().total, model.report().total);
  EXPECT_EQ(loaded->report().trainable, model.report().trainable);
  for (const auto& e : model.params().entries()) {
    EXPECT_TRUE(testing::bit_equal(loaded->params().get(e.name), e.tensor)) << e.name;
    EXPECT_EQ(loaded->params().is_frozen(e.name), e.frozen);
  }
  const auto sample = synth_sequence(small_synth(13), 0);
  NoGradGuard ng;
  const auto enc_a = model.encode_frame(sample.frames[1], &sample.xmaps[1]);
  const auto enc_b = loaded->encode_frame(sample.frames[1], &sample.xmaps[1]);
  const auto ref_a = model.encode_frame(sample.frames[0], &sample.xmaps[0]);
  const auto ref_b = loaded->encode_frame(sample.frames[0], &sample.xmaps[0]);
  const Reference ra{&ref_a, model.mask_tokens(sample.masks[0], sample.objects)};
  const Reference rb{&ref_b, loaded->mask_tokens(sample.masks[0], sample.objects)};
  EXPECT_TRUE(testing::bit_equal(model.predict(enc_a, {&ra, 1}, sample.objects),
                                 loaded->predict(enc_b, {&rb, 1}, sample.objects)));
}

TEST(Checkpoint, ShapeMismatchAndMissingDirectory) {
  testing::TempDir dir("ckpt2");
  EXPECT_THROW(load_checkpoint(dir.sub("missing")), IoError);
  ParamStore a, b;
  a.add_constant("w", {2, 3}, ParamGroup::foundation, 1.0);
  b.add_constant("w", {3, 2}, ParamGroup::foundation, 0.0);
  save_checkpoint(dir.str(), a, tiny_model());
  EXPECT_THROW(apply_checkpoint(load_checkpoint(dir.str()), b), ContractError);
}

TEST(Checkpoint, EncodesLittleEndianBinary32) {
  const std::vector<double> v{1.0, -2.5};
  const auto bytes = encode_f32(v);
  ASSERT_EQ(bytes.size(), 8u);
  // 1.0f = 0x3f800000, -2.5f = 0xc0200000.
  EXPECT_EQ(bytes, (std::vector<std::uint8_t>{0, 0, 0x80, 0x3f, 0, 0, 0x20, 0xc0}));
}

}  // namespace
}  // namespace xprompt
