// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "xprompt/errors.hpp"
#include "xprompt/synth.hpp"
#include "xprompt/training.hpp"

namespace xprompt {

namespace {

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

nlohmann::json EvalReport::to_json() const {
  nlohmann::json variants_json = nlohmann::json::array();
  for (const auto& v : variants) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : v.per_sequence) rows.push_back({{"name", r.name}, {"J", r.J}, {"F", r.F}, {"JF", r.JF}});
    variants_json.push_back({{"name", v.name},
                             {"trainable_params", v.params.trainable},
                             {"params",
                              {{"total", v.params.total},
                               {"frozen", v.params.frozen},
                               {"experts", v.params.experts},
                               {"prompter", v.params.prompter},
                               {"x_embed", v.params.x_embed},
                               {"trainable_foundation", v.params.trainable_foundation},
                               {"trainable_ratio", v.params.trainable_ratio()},
                               {"expert_ratio", v.params.expert_ratio()}}},
                             {"J", v.J},
                             {"F", v.F},
                             {"JF", v.JF},
                             {"per_sequence", rows},
                             {"seconds", v.seconds}});
  }
  return {{"config_hash", config_hash}, {"variants", variants_json}, {"runtime_seconds", seconds}};
}

std::string EvalReport::per_sequence_csv() const {
  std::string out = "variant,sequence,J,F,JF\n";
  for (const auto& v : variants) {
    for (const auto& r : v.per_sequence) {
      out += v.name + "," + r.name + "," + fixed6(r.J) + "," + fixed6(r.F) + "," + fixed6(r.JF) + "\n";
    }
  }
  return out;
}

std::string EvalReport::summary_csv() const {
  std::string out = "variant,trainable_params,total_params,experts_params,prompter_params,x_embed_params,J,F,JF\n";
  for (const auto& v : variants) {
    const auto& p = v.params;
    out += v.name + "," + std::to_string(p.trainable) + "," + std::to_string(p.total) + "," +
           std::to_string(p.experts) + "," + std::to_string(p.prompter) + "," + std::to_string(p.x_embed) + "," +
           fixed6(v.J) + "," + fixed6(v.F) + "," + fixed6(v.JF) + "\n";
  }
  return out;
}

VariantResult evaluate(const std::string& name, const Predictor& predict, const std::vector<VideoSample>& samples,
                       double tol) {
  if (samples.empty()) throw ContractError("evaluate: no sequences");
  const auto t0 = std::chrono::steady_clock::now();
  std::vector<const VideoSample*> ordered;
  for (const auto& s : samples) ordered.push_back(&s);
  std::stable_sort(ordered.begin(), ordered.end(), [](auto* a, auto* b) { return a->name < b->name; });

  VariantResult r;
  r.name = name;
  for (const VideoSample* s : ordered) {
    const auto pred = predict(*s);
    const double t = tol > 0.0 ? tol : default_boundary_tol(s->height(), s->width());
    const SequenceScore score = score_sequence(pred, s->masks, s->objects, t);
    r.per_sequence.push_back({s->name, score.J, score.F, score.JF});
    r.J += score.J;
    r.F += score.F;
  }
  r.J /= static_cast<double>(ordered.size());
  r.F /= static_cast<double>(ordered.size());
  r.JF = metric_jf(r.J, r.F);
  r.seconds = seconds_since(t0);
  return r;
}

VariantResult evaluate_model(const XPromptModel& model, const std::vector<VideoSample>& samples, double tol) {
  const std::string name = model.adapting() ? model.variant().name() : "rgb-only+frozen";
  VariantResult r = evaluate(
      name, [&model](const VideoSample& s) { return model.segment_video(s, s.masks.front()); }, samples, tol);
  r.params = model.report();
  return r;
}

void write_report(const EvalReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create report directory '" + dir + "': " + ec.message());
  auto put = [&dir](const char* file, const std::string& text) {
    std::ofstream out(fs::path(dir) / file, std::ios::binary);
    out << text;
    if (!out) throw IoError("cannot write '" + (fs::path(dir) / file).string() + "'");
  };
  put("report.json", report.to_json().dump(2) + "\n");
  put("per_sequence.csv", report.per_sequence_csv());
  put("summary.csv", report.summary_csv());
}

AblationData make_ablation_data(const RunConfig& cfg, std::uint64_t seed) {
  AblationData d;
  d.pretrain = pretrain_dataset(cfg.synth, cfg.eval.pretrain_sequences, seed);
  SynthConfig s = cfg.synth;
  s.num_sequences = cfg.eval.train_sequences;
  s.seed = Rng::mix(seed, 2000);
  d.train = synth_generate(s);
  s.num_sequences = cfg.eval.test_sequences;
  s.seed = Rng::mix(seed, 3000);
  d.test = synth_generate(s);
  return d;
}

EvalReport run_ablation(const RunConfig& cfg, std::uint64_t seed, const AblationData& data,
                        const XPromptModel* pretrained, const LogSink& log) {
  cfg.validate();
  std::vector<Variant> variants;
  for (const auto& name : cfg.eval.variants) variants.push_back(Variant::parse(name));
  const auto t0 = std::chrono::steady_clock::now();
  auto say = [&log](const std::string& msg) {
    if (log) log(msg);
  };

  std::unique_ptr<XPromptModel> own;
  if (pretrained == nullptr) {
    own = std::make_unique<XPromptModel>(cfg.model, seed);
    const TrainLog tl = pretrain(*own, data.pretrain, cfg.train, seed, [&](std::size_t step, double loss) {
      if (cfg.train.log_every && (step + 1) % cfg.train.log_every == 0) {
        say("pretrain step " + std::to_string(step + 1) + " loss " + fixed6(loss));
      }
    });
    own->params().round_to_f32();
    pretrained = own.get();
    say("pretrain done in " + fixed6(tl.seconds) + " s");
  } else if (pretrained->adapting()) {
    throw ContractError("run_ablation: the starting model must be a pretrain-stage model");
  }

  EvalReport report;
  report.config_hash = config_hash(cfg);
  for (const auto& v : variants) {
    XPromptModel model(pretrained->config(), seed);
    copy_parameters(pretrained->params(), model.params());
    const bool untouched = v.prompt == PromptMode::rgb_only && v.adapt == AdaptMode::frozen;
    TrainLog tl;
    if (untouched) {
      model.begin_adaptation(v, seed);
    } else {
      tl = adapt(model, data.train, v, cfg.train, seed, [&](std::size_t step, double loss) {
        if (cfg.train.log_every && (step + 1) % cfg.train.log_every == 0) {
          say(v.name() + " step " + std::to_string(step + 1) + " loss " + fixed6(loss));
        }
      });
    }
    VariantResult r = evaluate_model(model, data.test, cfg.eval.boundary_tol);
    r.name = v.name();
    r.train_losses = tl.losses;
    r.seconds += tl.seconds;
    say(r.name + ": J " + fixed6(r.J) + " F " + fixed6(r.F) + " J&F " + fixed6(r.JF) + " trainable " +
        std::to_string(r.params.trainable));
    report.variants.push_back(std::move(r));
  }
  report.seconds = seconds_since(t0);
  return report;
}

}  // namespace xprompt
