// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "test_util.hpp"
#include "xprompt/evaluation.hpp"
#include "xprompt/synth.hpp"

namespace xprompt {
namespace {

RunConfig tiny_run() {
  RunConfig c;
  c.model.embed_dim = 32;
  c.model.layers = 1;
  c.synth.frames = 3;
  c.synth.height = c.synth.width = 32;
  c.synth.min_size = 8.0;
  c.synth.max_size = 14.0;
  c.synth.corruption = Corruption::low_contrast;
  c.synth.severity = 0.9;
  c.train.pretrain_steps = 6;
  c.train.adapt_steps = 4;
  c.train.log_every = 0;
  c.eval.pretrain_sequences = 4;
  c.eval.train_sequences = 3;
  c.eval.test_sequences = 2;
  return c;
}

std::string slurp(const std::string& path) {
  std::ifstream f(path);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

TEST(Evaluation, PerfectPredictorScoresOne) {
  SynthConfig s = tiny_run().synth;
  s.num_sequences = 4;
  const auto data = synth_generate(s);
  const auto r = evaluate("oracle", [](const VideoSample& v) { return v.masks; }, data, 0.0);
  EXPECT_EQ(r.J, 1.0);
  EXPECT_EQ(r.F, 1.0);
  EXPECT_EQ(r.JF, 1.0);
  EXPECT_EQ(r.per_sequence.size(), 4u);
  const auto blank = evaluate(
      "blank",
      [](const VideoSample& v) {
        std::vector<SegmentationMask> out(v.length(), SegmentationMask(v.height(), v.width(), 0));
        out[0] = v.masks[0];
        return out;
      },
      data, 0.0);
  EXPECT_EQ(blank.JF, 0.0);
}

TEST(Evaluation, AblationIsDeterministicAndComplete) {
  RunConfig cfg = tiny_run();
  cfg.eval.variants = {"rgb-only+frozen", "mvp+frozen", "concat+lora", "mvp+maes"};
  const auto data = make_ablation_data(cfg, 3);
  const EvalReport a = run_ablation(cfg, 3, data);
  const EvalReport b = run_ablation(cfg, 3, data);
  ASSERT_EQ(a.variants.size(), 4u);
  EXPECT_EQ(a.summary_csv(), b.summary_csv());
  EXPECT_EQ(a.per_sequence_csv(), b.per_sequence_csv());
  // One header plus one row per variant and test sequence.
  const std::string per = a.per_sequence_csv();
  EXPECT_EQ(std::count(per.begin(), per.end(), '\n'), 1 + 4 * 2);
  EXPECT_EQ(a.variants[0].params.trainable, 0u);

  testing::TempDir dir("report");
  write_report(a, dir.str());
  EXPECT_EQ(slurp(dir.sub("summary.csv")), a.summary_csv());
  EXPECT_EQ(slurp(dir.sub("per_sequence.csv")), a.per_sequence_csv());
}

TEST(Evaluation, LearnableColumnIsAffineInExpertCount) {
  RunConfig cfg = tiny_run();
  cfg.train.adapt_steps = 1;
  cfg.eval.variants = {"mvp+maes(K=1)", "mvp+maes(K=2)", "mvp+maes(K=3)", "mvp+maes(K=4)"};
  const auto data = make_ablation_data(cfg, 4);
  const EvalReport r = run_ablation(cfg, 4, data);
  ASSERT_EQ(r.variants.size(), 4u);
  const auto step = long(r.variants[1].params.trainable) - long(r.variants[0].params.trainable);
  EXPECT_GT(step, 0);
  for (std::size_t k = 1; k < 4; ++k) {
    EXPECT_EQ(long(r.variants[k].params.trainable) - long(r.variants[k - 1].params.trainable), step);
  }
}

}  // namespace
}  // namespace xprompt
