// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "xprompt/dataset_io.hpp"
#include "xprompt/errors.hpp"
#include "xprompt/evaluation.hpp"
#include "xprompt/gradcheck_suite.hpp"
#include "xprompt/synth.hpp"
#include "xprompt/training.hpp"

namespace xprompt {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string data;
  std::string checkpoint;
  std::string variant;
  std::size_t seeds = 20;
};

RunConfig load_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  cfg.validate();
  return cfg;
}

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

void require_out(const Options& o, const char* cmd) {
  if (o.out.empty()) throw ContractError(std::string(cmd) + ": --out is required");
}

void write_losses(const std::string& dir, const std::vector<double>& losses) {
  std::ofstream f(fs::path(dir) / "train_log.csv");
  if (!f) throw IoError("cannot write train_log.csv in '" + dir + "'");
  f << "step,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) f << i + 1 << "," << fmt(losses[i], "%.9g") << "\n";
}

void print_report(std::ostream& out, const ParamReport& r) {
  out << "parameters: total " << r.total << ", trainable " << r.trainable << " (" << fmt(100.0 * r.trainable_ratio(), "%.3f")
      << "%), frozen " << r.frozen << "\n"
      << "  experts " << r.experts << " (" << fmt(100.0 * r.expert_ratio(), "%.3f") << "% of total), prompter "
      << r.prompter << ", x-embed " << r.x_embed << ", trainable foundation " << r.trainable_foundation << "\n";
}

StepCallback progress(std::ostream& out, const std::string& tag, std::size_t every) {
  return [&out, tag, every](std::size_t step, double loss) {
    if (every && (step + 1) % every == 0) out << tag << " step " << step + 1 << " loss " << fmt(loss) << "\n";
  };
}

int cmd_synth(const Options& o, std::ostream& out) {
  require_out(o, "synth");
  RunConfig cfg = load_config(o);
  cfg.synth.seed = o.seed;
  const auto samples = synth_generate(cfg.synth);
  save_dataset(o.out, samples);
  out << "wrote " << samples.size() << " sequences (" << to_string(cfg.synth.corruption) << ", severity "
      << fmt(cfg.synth.severity) << ", x " << to_string(cfg.synth.x_signal) << ") to " << o.out << "\n";
  return 0;
}

int cmd_pretrain(const Options& o, std::ostream& out) {
  require_out(o, "pretrain");
  const RunConfig cfg = load_config(o);
  const auto data =
      o.data.empty() ? pretrain_dataset(cfg.synth, cfg.eval.pretrain_sequences, o.seed) : load_dataset(o.data);
  XPromptModel model(cfg.model, o.seed);
  const TrainLog log = pretrain(model, data, cfg.train, o.seed, progress(out, "pretrain", cfg.train.log_every));
  save_model(o.out, model, {{"seed", o.seed}, {"config_hash", config_hash(cfg)}});
  write_losses(o.out, log.losses);
  if (!log.losses.empty()) {
    out << "pretrain: " << log.losses.size() << " steps, loss " << fmt(log.losses.front()) << " -> "
        << fmt(log.losses.back()) << ", " << fmt(log.seconds, "%.1f") << " s\n";
  }
  print_report(out, model.report());
  out << "checkpoint written to " << o.out << "\n";
  return 0;
}

int cmd_adapt(const Options& o, std::ostream& out) {
  require_out(o, "adapt");
  if (o.checkpoint.empty()) throw ContractError("adapt: a pretrained checkpoint is required (--checkpoint)");
  const RunConfig cfg = load_config(o);
  auto model = load_model(o.checkpoint);
  if (model->adapting()) throw ContractError("adapt: '" + o.checkpoint + "' is not a pretrain checkpoint");
  std::vector<VideoSample> data;
  if (o.data.empty()) {
    SynthConfig s = cfg.synth;
    s.num_sequences = cfg.eval.train_sequences;
    s.seed = Rng::mix(o.seed, 2000);
    data = synth_generate(s);
  } else {
    data = load_dataset(o.data);
  }
  const Variant v = Variant::parse(o.variant.empty() ? cfg.train.variant : o.variant);
  const TrainLog log = adapt(*model, data, v, cfg.train, o.seed, progress(out, v.name(), cfg.train.log_every));
  save_model(o.out, *model, {{"seed", o.seed}, {"config_hash", config_hash(cfg)}, {"pretrain", o.checkpoint}});
  write_losses(o.out, log.losses);
  if (!log.losses.empty()) {
    out << "adapt " << v.name() << ": " << log.losses.size() << " steps, loss " << fmt(log.losses.front())
        << " -> " << fmt(log.losses.back()) << ", " << fmt(log.seconds, "%.1f") << " s\n";
  }
  if (log.ignored_frozen) out << "warning: " << log.ignored_frozen << " gradients for frozen parameters ignored\n";
  print_report(out, model->report());
  out << "checkpoint written to " << o.out << "\n";
  return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
  require_out(o, "eval");
  if (o.checkpoint.empty()) throw ContractError("eval: --checkpoint is required");
  const RunConfig cfg = load_config(o);
  std::vector<VideoSample> data;
  if (o.data.empty()) {
    SynthConfig s = cfg.synth;
    s.num_sequences = cfg.eval.test_sequences;
    s.seed = Rng::mix(o.seed, 3000);
    data = synth_generate(s);
  } else {
    data = load_dataset(o.data);
  }
  const auto model = load_model(o.checkpoint);
  EvalReport report;
  report.config_hash = config_hash(cfg);
  report.variants.push_back(evaluate_model(*model, data, cfg.eval.boundary_tol));
  report.seconds = report.variants.back().seconds;
  write_report(report, o.out);
  const auto& r = report.variants.back();
  out << r.name << " on " << data.size() << " sequences: J " << fmt(100 * r.J, "%.1f") << "  F "
      << fmt(100 * r.F, "%.1f") << "  J&F " << fmt(100 * r.JF, "%.1f") << "\n";
  return 0;
}

int cmd_ablate(const Options& o, std::ostream& out) {
  require_out(o, "ablate");
  const RunConfig cfg = load_config(o);
  std::unique_ptr<XPromptModel> pre;
  if (!o.checkpoint.empty()) {
    pre = load_model(o.checkpoint);
    if (pre->adapting()) throw ContractError("ablate: '" + o.checkpoint + "' is not a pretrain checkpoint");
  }
  const AblationData data = make_ablation_data(cfg, o.seed);
  const EvalReport report =
      run_ablation(cfg, o.seed, data, pre.get(), [&out](const std::string& line) { out << line << "\n"; });
  write_report(report, o.out);
  out << "\nvariant                     learnable      J      F    J&F\n";
  for (const auto& v : report.variants) {
    char line[160];
    std::snprintf(line, sizeof line, "%-26s %10zu %6.1f %6.1f %6.1f\n", v.name.c_str(), v.params.trainable,
                  100 * v.J, 100 * v.F, 100 * v.JF);
    out << line;
  }
  out << "report written to " << o.out << "\n";
  return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
  if (!o.config.empty()) load_config(o);
  if (o.seeds == 0) throw ContractError("gradcheck: --seeds must be positive");
  double worst = 0.0;
  bool ok = true;
  nlohmann::json rows = nlohmann::json::array();
  run_gradcheck_suite(o.seeds, o.seed, [&](const GradCheckResult& r) {
    const bool pass = r.max_error < 1e-4;
    ok = ok && pass;
    worst = std::isnan(r.max_error) ? r.max_error : std::max(worst, r.max_error);
    char line[160];
    std::snprintf(line, sizeof line, "%-48s cases %3zu  max rel err %.3e  %s\n", r.name.c_str(), r.cases,
                  r.max_error, pass ? "ok" : "FAIL");
    out << line << std::flush;
    rows.push_back({{"name", r.name}, {"cases", r.cases}, {"max_error", r.max_error}});
  });
  out << "overall max relative error " << fmt(worst, "%.3e") << (ok ? " (< 1e-4)" : " (FAILED)") << "\n";
  if (!o.out.empty()) {
    std::ofstream f(o.out);
    if (!f) throw IoError("cannot write '" + o.out + "'");
    f << nlohmann::json{{"max_error", worst}, {"checks", rows}}.dump(2) << "\n";
  }
  return ok ? 0 : 1;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"X-Prompt desk: RGB-X video object segmentation with prompts and adaptation experts", "xprompt"};
  app.require_subcommand(1);
  Options o;
  auto common = [&o](CLI::App* sub) {
    sub->add_option("config", o.config, "JSON run configuration (defaults when omitted)");
    sub->add_option("--seed", o.seed, "random seed");
    sub->add_option("--out", o.out, "output path");
  };
  auto* synth = app.add_subcommand("synth", "generate a synthetic RGB-X dataset");
  common(synth);
  auto* pre = app.add_subcommand("pretrain", "stage 1: train the RGB foundation model");
  common(pre);
  pre->add_option("--data", o.data, "RGB training dataset (synthetic clean data when omitted)");
  auto* ad = app.add_subcommand("adapt", "stage 2: multi-modal adaptation of a pretrained checkpoint");
  common(ad);
  ad->add_option("--checkpoint", o.checkpoint, "pretrain checkpoint directory");
  ad->add_option("--data", o.data, "RGB-X training dataset (synthetic when omitted)");
  ad->add_option("--variant", o.variant, "variant such as mvp+maes (overrides the config)");
  auto* ev = app.add_subcommand("eval", "score a checkpoint on a dataset");
  common(ev);
  ev->add_option("--checkpoint", o.checkpoint, "checkpoint directory");
  ev->add_option("--data", o.data, "dataset directory (synthetic test split when omitted)");
  auto* ab = app.add_subcommand("ablate", "train and score every configured variant");
  common(ab);
  ab->add_option("--checkpoint", o.checkpoint, "reuse this pretrain checkpoint");
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  common(gc);
  gc->add_option("--seeds", o.seeds, "random cases per op");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    if (synth->parsed()) return cmd_synth(o, out);
    if (pre->parsed()) return cmd_pretrain(o, out);
    if (ad->parsed()) return cmd_adapt(o, out);
    if (ev->parsed()) return cmd_eval(o, out);
    if (ab->parsed()) return cmd_ablate(o, out);
    if (gc->parsed()) return cmd_gradcheck(o, out);
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  err << app.help();
  return 1;
}

}  // namespace xprompt
