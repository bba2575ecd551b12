// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Benchmark and ablation runners plus report serialization.
//
// per_sequence.csv columns: variant,sequence,J,F,JF
// summary.csv columns:      variant,trainable_params,total_params,experts_params,
//                           prompter_params,x_embed_params,J,F,JF
// Scores are fractions in [0, 1] printed with six decimals.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xprompt/config.hpp"
#include "xprompt/framework.hpp"
#include "xprompt/metrics.hpp"
#include "xprompt/video.hpp"

namespace xprompt {

struct SequenceRow {
  std::string name;
  double J = 0.0;
  double F = 0.0;
  double JF = 0.0;
};

struct VariantResult {
  std::string name;
  ParamReport params;
  double J = 0.0;
  double F = 0.0;
  double JF = 0.0;
  std::vector<SequenceRow> per_sequence;  // ordered by sequence name
  std::vector<double> train_losses;
  double seconds = 0.0;
};

struct EvalReport {
  std::string config_hash;
  std::vector<VariantResult> variants;
  double seconds = 0.0;

  nlohmann::json to_json() const;
  std::string per_sequence_csv() const;
  std::string summary_csv() const;
};

/// Maps a sequence to one predicted mask per frame (frame 0 included).
using Predictor = std::function<std::vector<SegmentationMask>(const VideoSample&)>;

/// tol <= 0 selects the default boundary tolerance per sequence size.
VariantResult evaluate(const std::string& name, const Predictor& predict, const std::vector<VideoSample>& samples,
                       double tol);
VariantResult evaluate_model(const XPromptModel& model, const std::vector<VideoSample>& samples, double tol);

/// report.json, per_sequence.csv and summary.csv under `dir`.
void write_report(const EvalReport& report, const std::string& dir);

struct AblationData {
  std::vector<VideoSample> pretrain;
  std::vector<VideoSample> train;
  std::vector<VideoSample> test;
};

/// Clean pretraining sequences plus disjoint train/test splits of the
/// configured scenario, all derived from `seed`.
AblationData make_ablation_data(const RunConfig& cfg, std::uint64_t seed);

using LogSink = std::function<void(const std::string&)>;

/// Pretrains once (unless `pretrained` is given), then adapts and evaluates
/// every variant in cfg.eval.variants from the same weights, seed and step
/// budget.
EvalReport run_ablation(const RunConfig& cfg, std::uint64_t seed, const AblationData& data,
                        const XPromptModel* pretrained = nullptr, const LogSink& log = {});

}  // namespace xprompt
