// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "xprompt/errors.hpp"
#include "xprompt/foundation.hpp"
#include "xprompt/framework.hpp"
#include "xprompt/losses.hpp"
#include "xprompt/maes.hpp"
#include "xprompt/mvp.hpp"
#include "xprompt/rng.hpp"
#include "xprompt/synth.hpp"
#include "xprompt/training.hpp"

namespace xprompt {

using namespace ops;

namespace {

constexpr double kEps = 1e-6;

Tensor randn(Shape shape, Rng& rng, double stddev = 1.0) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from(std::move(shape), std::move(v));
}

// Values bounded away from zero, for kinked or singular ops.
Tensor away_from_zero(Shape shape, Rng& rng, double lo, double hi) {
  std::vector<double> v(numel(shape));
  for (double& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(lo, hi);
  return Tensor::from(std::move(shape), std::move(v));
}

std::size_t pick(Rng& rng, int lo, int hi) { return static_cast<std::size_t>(rng.uniform_int(lo, hi)); }

// Gradient check of <f(x), w> for a fixed random w, so every output
// coordinate contributes with its own weight.
double check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, Rng& rng) {
  Tensor probe;
  {
    NoGradGuard no_grad;
    probe = f(x);
  }
  const Tensor w = randn(probe.shape(), rng);
  return grad_check([&](const Tensor& t) { return sum(mul(f(t), w)); }, x, kEps);
}

using Case = std::pair<const char*, std::function<double(Rng&)>>;

std::vector<Case> op_cases() {
  std::vector<Case> c;
  c.emplace_back("matmul", [](Rng& r) {
    const auto m = pick(r, 1, 4), k = pick(r, 1, 4), n = pick(r, 1, 4);
    const Tensor a = randn({m, k}, r), b = randn({k, n}, r);
    return std::max(check([&](const Tensor& t) { return matmul(t, b); }, a, r),
                    check([&](const Tensor& t) { return matmul(a, t); }, b, r));
  });
  c.emplace_back("matmul_nt", [](Rng& r) {
    const auto m = pick(r, 1, 4), k = pick(r, 1, 4), n = pick(r, 1, 4);
    const Tensor a = randn({m, k}, r), b = randn({n, k}, r);
    return std::max(check([&](const Tensor& t) { return matmul_nt(t, b); }, a, r),
                    check([&](const Tensor& t) { return matmul_nt(a, t); }, b, r));
  });
  c.emplace_back("linear", [](Rng& r) {
    const auto in = pick(r, 1, 5), out = pick(r, 1, 4), rows = pick(r, 1, 3);
    const Shape xs = r.uniform() < 0.5 ? Shape{rows, in} : Shape{rows, 2, in};
    const Tensor x = randn(xs, r), w = randn({out, in}, r), b = randn({out}, r);
    return std::max({check([&](const Tensor& t) { return linear(t, w, b); }, x, r),
                     check([&](const Tensor& t) { return linear(x, t, b); }, w, r),
                     check([&](const Tensor& t) { return linear(x, w, t); }, b, r)});
  });
  c.emplace_back("transpose", [](Rng& r) {
    return check([](const Tensor& t) { return transpose(t); }, randn({pick(r, 1, 4), pick(r, 1, 4)}, r), r);
  });
  c.emplace_back("reshape", [](Rng& r) {
    const auto a = pick(r, 1, 4), b = pick(r, 1, 4);
    return check([&](const Tensor& t) { return reshape(t, {b, a}); }, randn({a, b}, r), r);
  });
  auto binary = [](const char* name, Tensor (*op)(const Tensor&, const Tensor&), bool positive_rhs) {
    return Case(name, [op, positive_rhs](Rng& r) {
      const Shape s{pick(r, 1, 3), pick(r, 1, 4)};
      const Tensor a = randn(s, r), b = positive_rhs ? away_from_zero(s, r, 0.5, 1.5) : randn(s, r);
      return std::max(check([&](const Tensor& t) { return op(t, b); }, a, r),
                      check([&](const Tensor& t) { return op(a, t); }, b, r));
    });
  };
  c.push_back(binary("add", add, false));
  c.push_back(binary("sub", sub, false));
  c.push_back(binary("mul", mul, false));
  c.push_back(binary("div", div, true));
  c.emplace_back("add_scalar", [](Rng& r) {
    const double s = r.normal();
    return check([s](const Tensor& t) { return add_scalar(t, s); }, randn({pick(r, 1, 5)}, r), r);
  });
  c.emplace_back("scale", [](Rng& r) {
    const double s = r.normal();
    return check([s](const Tensor& t) { return scale(t, s); }, randn({pick(r, 1, 3), pick(r, 1, 3)}, r), r);
  });
  c.emplace_back("add_trailing", [](Rng& r) {
    const auto n = pick(r, 1, 4);
    const Tensor a = randn({pick(r, 1, 3), pick(r, 1, 3), n}, r), v = randn({n}, r);
    return std::max(check([&](const Tensor& t) { return add_trailing(t, v); }, a, r),
                    check([&](const Tensor& t) { return add_trailing(a, t); }, v, r));
  });
  c.emplace_back("mul_trailing", [](Rng& r) {
    const auto n = pick(r, 1, 4);
    const Tensor a = randn({pick(r, 1, 3), pick(r, 1, 3), n}, r), v = randn({n}, r);
    return std::max(check([&](const Tensor& t) { return mul_trailing(t, v); }, a, r),
                    check([&](const Tensor& t) { return mul_trailing(a, t); }, v, r));
  });
  c.emplace_back("expand_last", [](Rng& r) {
    const auto n = pick(r, 1, 4);
    return check([n](const Tensor& t) { return expand_last(t, n); }, randn({pick(r, 1, 3), pick(r, 1, 3), 1}, r), r);
  });
  auto unary = [](const char* name, Tensor (*op)(const Tensor&), int domain) {
    return Case(name, [op, domain](Rng& r) {
      const Shape s{pick(r, 1, 3), pick(r, 1, 5)};
      const Tensor x = domain == 0   ? randn(s, r, 2.0)
                       : domain == 1 ? away_from_zero(s, r, 0.1, 2.0)
                                     : Tensor::from(s, [&] {
                                         std::vector<double> v(numel(s));
                                         for (double& e : v) e = r.uniform(0.3, 3.0);
                                         return v;
                                       }());
      return check([op](const Tensor& t) { return op(t); }, x, r);
    });
  };
  c.push_back(unary("sigmoid", sigmoid, 0));
  c.push_back(unary("relu", relu, 1));
  c.push_back(unary("gelu", gelu, 0));
  c.push_back(unary("exp", exp, 0));
  c.push_back(unary("log", log, 2));
  c.push_back(unary("softmax", softmax, 0));
  c.push_back(unary("log_softmax", log_softmax, 0));
  c.emplace_back("layer_norm", [](Rng& r) {
    const auto d = pick(r, 2, 8);
    const Tensor x = randn({pick(r, 1, 3), d}, r), g = randn({d}, r), b = randn({d}, r);
    return std::max({check([&](const Tensor& t) { return layer_norm(t, g, b); }, x, r),
                     check([&](const Tensor& t) { return layer_norm(x, t, b); }, g, r),
                     check([&](const Tensor& t) { return layer_norm(x, g, t); }, b, r)});
  });
  c.push_back(unary("sum", sum, 0));
  c.push_back(unary("mean", mean, 0));
  c.push_back(unary("sum_last", sum_last, 0));
  c.emplace_back("gather", [](Rng& r) {
    const Tensor x = randn({pick(r, 1, 3), pick(r, 1, 4)}, r);
    std::vector<std::size_t> idx(pick(r, 1, 8));
    for (auto& i : idx) i = pick(r, 0, static_cast<int>(x.numel()) - 1);
    return check([&](const Tensor& t) { return gather(t, idx); }, x, r);
  });
  c.emplace_back("conv2d", [](Rng& r) {
    const auto k = pick(r, 1, 3), stride = pick(r, 1, 2), pad = pick(r, 0, 1);
    const auto h = pick(r, static_cast<int>(k), 6), w = pick(r, static_cast<int>(k), 6);
    const auto cin = pick(r, 1, 3), cout = pick(r, 1, 3);
    const Tensor x = randn({h, w, cin}, r), wt = randn({k, k, cin, cout}, r), b = randn({cout}, r);
    const Conv2dAttrs at{stride, pad};
    return std::max({check([&](const Tensor& t) { return conv2d(t, wt, b, at); }, x, r),
                     check([&](const Tensor& t) { return conv2d(x, t, b, at); }, wt, r),
                     check([&](const Tensor& t) { return conv2d(x, wt, t, at); }, b, r)});
  });
  c.emplace_back("avg_pool2d", [](Rng& r) {
    return check([](const Tensor& t) { return avg_pool2d(t, 2, 2); },
                 randn({2 * pick(r, 1, 3), 2 * pick(r, 1, 3), pick(r, 1, 3)}, r), r);
  });
  c.emplace_back("max_pool2d", [](Rng& r) {
    return check([](const Tensor& t) { return max_pool2d(t, 2, 2); },
                 randn({2 * pick(r, 1, 3), 2 * pick(r, 1, 3), pick(r, 1, 3)}, r), r);
  });
  auto grid_op = [](const char* name, Tensor (*op)(const Tensor&)) {
    return Case(name, [op](Rng& r) {
      return check([op](const Tensor& t) { return op(t); }, randn({pick(r, 1, 4), pick(r, 1, 4), pick(r, 1, 4)}, r),
                   r);
    });
  };
  c.push_back(grid_op("global_avg_pool", global_avg_pool));
  c.push_back(grid_op("global_max_pool", global_max_pool));
  c.push_back(grid_op("channel_avg_pool", channel_avg_pool));
  c.push_back(grid_op("channel_max_pool", channel_max_pool));
  c.emplace_back("upsample_nearest", [](Rng& r) {
    return check([](const Tensor& t) { return upsample_nearest(t, 2); },
                 randn({pick(r, 1, 3), pick(r, 1, 3), pick(r, 1, 2)}, r), r);
  });
  c.emplace_back("upsample_bilinear", [](Rng& r) {
    const std::size_t factor = r.uniform() < 0.5 ? 2 : 4;
    return check([factor](const Tensor& t) { return upsample_bilinear(t, factor); },
                 randn({pick(r, 1, 4), pick(r, 1, 4), pick(r, 1, 2)}, r), r);
  });
  c.emplace_back("concat", [](Rng& r) {
    const auto axis = pick(r, 0, 1);
    Shape s0{pick(r, 1, 3), pick(r, 1, 3)}, s1 = s0;
    s1[axis] = pick(r, 1, 3);
    const Tensor a = randn(s0, r), b = randn(s1, r);
    return std::max(check([&](const Tensor& t) { return concat({t, b}, axis); }, a, r),
                    check([&](const Tensor& t) { return concat({a, t}, axis); }, b, r));
  });
  c.emplace_back("slice", [](Rng& r) {
    const Tensor x = randn({pick(r, 2, 5), pick(r, 1, 3)}, r);
    const auto start = pick(r, 0, static_cast<int>(x.dim(0)) - 1);
    const auto len = pick(r, 1, static_cast<int>(x.dim(0) - start));
    return check([&](const Tensor& t) { return slice(t, 0, start, len); }, x, r);
  });
  c.emplace_back("multi_head_attention", [](Rng& r) {
    const auto heads = pick(r, 1, 2), dh = pick(r, 1, 3), nq = pick(r, 1, 4), nk = pick(r, 1, 4);
    const Tensor q = randn({nq, heads * dh}, r), k = randn({nk, heads * dh}, r), v = randn({nk, heads * dh}, r);
    return std::max({check([&](const Tensor& t) { return multi_head_attention(t, k, v, heads); }, q, r),
                     check([&](const Tensor& t) { return multi_head_attention(q, t, v, heads); }, k, r),
                     check([&](const Tensor& t) { return multi_head_attention(q, k, t, heads); }, v, r)});
  });
  return c;
}

SegmentationMask random_mask(std::size_t h, std::size_t w, std::size_t objects, Rng& rng) {
  SegmentationMask m(h, w);
  for (auto& id : m.ids) id = static_cast<std::uint8_t>(rng.uniform_int(0, static_cast<int>(objects)));
  return m;
}

std::vector<Tensor> trainable_leaves(const ParamStore& store) {
  std::vector<Tensor> out;
  for (const auto& e : store.entries()) {
    if (!e.frozen) out.push_back(e.tensor);
  }
  return out;
}

void jitter(ParamStore& store, Rng& rng, double stddev) {
  for (const auto& e : store.entries()) {
    if (e.frozen) continue;
    Tensor t = e.tensor;
    for (double& v : t.mutable_values()) v += rng.normal(0.0, stddev);
  }
}

std::vector<Case> module_cases() {
  std::vector<Case> c;
  c.emplace_back("combined_loss", [](Rng& r) {
    const auto h = pick(r, 2, 4), w = pick(r, 2, 4), objects = pick(r, 1, 2);
    const SegmentationMask gt = random_mask(h, w, objects, r);
    const double keep = r.uniform() < 0.5 ? 1.0 : 0.5;
    const Tensor logits = randn({h, w, objects + 1}, r);
    return grad_check([&](const Tensor& t) { return combined_loss(t, gt, keep); }, logits, kEps);
  });
  c.emplace_back("soft_jaccard_loss", [](Rng& r) {
    const SegmentationMask gt = random_mask(3, 3, 2, r);
    return grad_check([&](const Tensor& t) { return soft_jaccard_loss(softmax(t), gt); }, randn({3, 3, 3}, r), kEps);
  });
  c.emplace_back("route", [](Rng& r) {
    ParamStore store;
    const auto din = pick(r, 2, 5), dout = pick(r, 2, 5), K = pick(r, 1, 3), rank = pick(r, 1, 2);
    ExpertBank bank = make_expert_bank(store, "bank", din, dout, K, rank, true, r);
    jitter(store, r, 0.5);
    const Tensor h = randn({pick(r, 1, 4), din}, r), w = randn({h.dim(0), dout}, r);
    const auto leaves = trainable_leaves(store);
    return std::max(check([&](const Tensor& t) { return route(t, bank); }, h, r),
                    grad_check_params([&] { return sum(mul(route(h, bank), w)); }, leaves, kEps));
  });
  c.emplace_back("prompt_embed", [](Rng& r) {
    ModelConfig cfg;
    cfg.embed_dim = 16;
    ParamStore store;
    const PrompterParams p = make_prompter(store, cfg, r);
    jitter(store, r, 0.1);
    const auto gh = pick(r, 1, 3), gw = pick(r, 1, 3);
    const Tensor rgb = randn({gh * gw, 16}, r), x = randn({gh * gw, 16}, r), w = randn({gh * gw, 16}, r);
    const auto leaves = trainable_leaves(store);
    return std::max({check([&](const Tensor& t) { return prompt_embed(t, x, gh, gw, p); }, rgb, r),
                     check([&](const Tensor& t) { return prompt_embed(rgb, t, gh, gw, p); }, x, r),
                     grad_check_params([&] { return sum(mul(prompt_embed(rgb, x, gh, gw, p), w)); }, leaves, kEps)});
  });
  c.emplace_back("multiscale_prompts", [](Rng& r) {
    ModelConfig cfg;
    cfg.embed_dim = 16;
    ParamStore store;
    const PrompterParams p = make_prompter(store, cfg, r);
    jitter(store, r, 0.1);
    const Tensor r4 = randn({4, 4, 4}, r), r8 = randn({2, 2, 8}, r), x4 = randn({4, 4, 4}, r),
                 x8 = randn({2, 2, 8}, r), w4 = randn({4, 4, 4}, r), w8 = randn({2, 2, 8}, r);
    const auto loss = [&] {
      const auto out = multiscale_prompts(r4, r8, x4, x8, p);
      return add(sum(mul(out.p4, w4)), sum(mul(out.p8, w8)));
    };
    const Tensor leaves[] = {p.adapter4_w, p.adapter4_b, p.adapter8_w, p.adapter8_b};
    return grad_check_params(loss, leaves, kEps);
  });
  c.emplace_back("encoder_layer", [](Rng& r) {
    ModelConfig cfg;
    cfg.embed_dim = 8;
    ParamStore store;
    const EncoderLayerParams layer = make_encoder_layer(store, 0, cfg, r);
    jitter(store, r, 0.1);
    const auto nt = pick(r, 1, 3), nr = pick(r, 1, 3);
    const Tensor z = randn({nt + nr, 8}, r), m = randn({nr, 8}, r);
    return std::max({check([&](const Tensor& t) { return encoder_layer(t, m, nt, layer, 2, 1e-5); }, z, r),
                     check([&](const Tensor& t) { return encoder_layer(z, t, nt, layer, 2, 1e-5); }, m, r)});
  });
  c.emplace_back("decode_mask", [](Rng& r) {
    ModelConfig cfg;
    cfg.embed_dim = 16;
    cfg.max_objects = 2;
    ParamStore store;
    const DecoderParams d = make_decoder(store, cfg, r);
    const Tensor f = randn({4, 16}, r), p8 = randn({4, 4, 8}, r), p4 = randn({8, 8, 4}, r);
    const auto leaves = trainable_leaves(store);
    const Tensor w = randn({32, 32, 3}, r);
    return std::max({check([&](const Tensor& t) { return decode_mask(t, 2, 2, p8, p4, 2, d); }, f, r),
                     check([&](const Tensor& t) { return decode_mask(f, 2, 2, t, p4, 2, d); }, p8, r),
                     grad_check_params([&] { return sum(mul(decode_mask(f, 2, 2, p8, p4, 2, d), w)); }, leaves, kEps)});
  });
  return c;
}

std::vector<GradCheckResult> run_cases(const std::vector<Case>& cases, std::size_t seeds, std::uint64_t base_seed,
                                       const ResultSink& sink = {}) {
  std::vector<GradCheckResult> out;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    GradCheckResult res{cases[i].first, 0.0, seeds};
    for (std::size_t s = 0; s < seeds; ++s) {
      Rng rng(Rng::mix(base_seed, i * 1000 + s));
      const double err = cases[i].second(rng);
      res.max_error = std::isnan(err) || std::isnan(res.max_error) ? std::nan("") : std::max(res.max_error, err);
    }
    if (sink) sink(res);
    out.push_back(res);
  }
  return out;
}

}  // namespace

double grad_check_params(const std::function<Tensor()>& loss, std::span<const Tensor> params, double eps,
                         std::size_t stride, std::size_t offset) {
  if (!(eps >= 1e-7 && eps <= 1e-3)) throw ContractError("grad_check_params: eps must lie in [1e-7, 1e-3]");
  if (stride == 0) throw ContractError("grad_check_params: stride must be positive");
  for (const auto& p : params) {
    if (!p.is_leaf() || !p.requires_grad()) throw ContractError("grad_check_params: parameters must be trainable leaves");
    Tensor(p).zero_grad();
  }
  const Tensor l = loss();
  if (l.numel() != 1) throw ContractError("grad_check_params: loss must be scalar");
  backward(l);
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) {
    std::vector<double> g(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), g.begin());
    analytic.push_back(std::move(g));
  }
  NoGradGuard no_grad;
  double worst = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor p = params[k];
    auto vals = p.mutable_values();
    for (std::size_t i = offset % stride; i < vals.size(); i += stride) {
      const double saved = vals[i];
      vals[i] = saved + eps;
      const double plus = loss().item();
      vals[i] = saved - eps;
      const double minus = loss().item();
      vals[i] = saved;
      const double central = (plus - minus) / (2.0 * eps);
      const double err = std::abs(analytic[k][i] - central) / std::max(1.0, std::abs(central));
      if (std::isnan(err)) return err;
      worst = std::max(worst, err);
    }
    p.zero_grad();
  }
  return worst;
}

std::vector<GradCheckResult> op_gradchecks(std::size_t seeds, std::uint64_t base_seed) {
  return run_cases(op_cases(), seeds, base_seed);
}

std::vector<GradCheckResult> module_gradchecks(std::size_t seeds, std::uint64_t base_seed) {
  return run_cases(module_cases(), seeds, Rng::mix(base_seed, 1));
}

namespace {

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.embed_dim = 16;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.max_objects = 2;
  cfg.expert_rank = 2;
  cfg.num_experts = 2;
  cfg.adapter_bottleneck = 4;
  return cfg;
}

VideoSample tiny_clip(std::uint64_t seed) {
  SynthConfig s;
  s.num_sequences = 1;
  s.frames = 3;
  s.height = s.width = 32;
  s.min_objects = s.max_objects = 2;
  s.min_size = 8;
  s.max_size = 14;
  s.corruption = Corruption::low_contrast;
  s.severity = 0.5;
  s.seed = seed;
  return synth_sequence(s, 0);
}

}  // namespace

std::vector<GradCheckResult> model_gradchecks(std::uint64_t seed) {
  std::vector<GradCheckResult> out;
  const VideoSample clip = tiny_clip(seed);
  {
    XPromptModel model(tiny_config(), seed);
    Rng rng(Rng::mix(seed, 5));
    jitter(model.params(), rng, 0.05);
    const auto leaves = trainable_leaves(model.params());
    const double err =
        grad_check_params([&] { return clip_loss(model, clip, 0, 3, 1.0); }, leaves, kEps);
    out.push_back({"model: pretrain stage, all parameters", err, 1});
  }
  {
    XPromptModel model(tiny_config(), seed);
    model.begin_adaptation(Variant::parse("mvp+maes"), seed);
    Rng rng(Rng::mix(seed, 6));
    jitter(model.params(), rng, 0.05);
    const auto leaves = trainable_leaves(model.params());
    const double err =
        grad_check_params([&] { return clip_loss(model, clip, 0, 3, 1.0); }, leaves, kEps);
    out.push_back({"model: mvp+maes adaptation, trainable parameters", err, 1});
  }
  return out;
}

std::vector<GradCheckResult> run_gradcheck_suite(std::size_t seeds, std::uint64_t seed, const ResultSink& sink) {
  auto out = run_cases(op_cases(), seeds, seed, sink);
  for (auto& r : run_cases(module_cases(), seeds, Rng::mix(seed, 1), sink)) out.push_back(std::move(r));
  for (auto& r : model_gradchecks(seed)) {
    if (sink) sink(r);
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace xprompt
