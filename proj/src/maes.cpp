// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/maes.hpp"

#include "xprompt/errors.hpp"

namespace xprompt {

namespace {
constexpr double kInitStd = 0.02;
}

std::string_view to_string(ExpertTarget target) {
  switch (target) {
    case ExpertTarget::msa_output: return "msa-output";
    case ExpertTarget::ffn_first: return "ffn-first";
    case ExpertTarget::ffn_second: return "ffn-second";
  }
  return "msa-output";
}

ExpertTarget parse_expert_target(std::string_view name) {
  for (auto t : {ExpertTarget::msa_output, ExpertTarget::ffn_first, ExpertTarget::ffn_second}) {
    if (to_string(t) == name) return t;
  }
  throw ConfigError("unknown expert target '" + std::string(name) + "'");
}

Tensor expert_delta(const Tensor& h, const Expert& expert) {
  if (h.rank() != 2 || h.dim(1) != expert.A.dim(1) || expert.B.dim(1) != expert.A.dim(0)) {
    throw ContractError("expert_delta: shape mismatch: h " + shape_str(h.shape()) + ", A " +
                        shape_str(expert.A.shape()) + ", B " + shape_str(expert.B.shape()));
  }
  return ops::linear(ops::linear(h, expert.A, Tensor()), expert.B, Tensor());
}

Tensor router_weights(const Tensor& h, const ExpertBank& bank) {
  if (!bank.routed()) throw ContractError("router_weights: bank has no router");
  return ops::softmax(ops::matmul(h, bank.router));
}

Tensor route(const Tensor& h, const ExpertBank& bank) {
  if (bank.experts.empty()) throw ContractError("route: empty expert bank");
  if (!bank.routed()) {
    if (bank.size() != 1) throw ContractError("route: an unrouted bank must hold exactly one expert");
    return expert_delta(h, bank.experts.front());
  }
  if (bank.router.dim(1) != bank.size()) {
    throw ContractError("route: router width " + std::to_string(bank.router.dim(1)) + " != " +
                        std::to_string(bank.size()) + " experts");
  }
  const Tensor weights = router_weights(h, bank);
  Tensor out;
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const Tensor delta = expert_delta(h, bank.experts[i]);
    const Tensor w = ops::expand_last(ops::slice(weights, 1, i, 1), delta.dim(1));
    const Tensor term = ops::mul(w, delta);
    out = out.defined() ? ops::add(out, term) : term;
  }
  return out;
}

Tensor adapted_linear(const Tensor& h, const Tensor& w0, const Tensor& b0, const ExpertBank* bank) {
  const Tensor base = ops::linear(h, w0, b0);
  if (bank == nullptr || bank->experts.empty()) return base;
  if (w0.requires_grad() || (b0.defined() && b0.requires_grad())) {
    throw ConfigError("adapted_linear: base weights must be frozen when experts are attached");
  }
  return ops::add(base, route(h, *bank));
}

ExpertBank make_expert_bank(ParamStore& store, const std::string& prefix, std::size_t d_in, std::size_t d_out,
                            std::size_t count, std::size_t rank, bool with_router, Rng& rng) {
  if (count == 0) throw ContractError("make_expert_bank: need at least one expert");
  if (!with_router && count != 1) throw ContractError("make_expert_bank: plain LoRA takes exactly one expert");
  ExpertBank bank;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string base = prefix + ".expert" + std::to_string(i);
    Expert e;
    e.A = store.add_normal(base + ".A", {rank, d_in}, ParamGroup::experts, rng, kInitStd);
    e.B = store.add_constant(base + ".B", {d_out, rank}, ParamGroup::experts, 0.0);
    bank.experts.push_back(e);
  }
  if (with_router) bank.router = store.add_normal(prefix + ".router", {d_in, count}, ParamGroup::experts, rng, kInitStd);
  return bank;
}

std::size_t expert_bank_param_count(std::size_t d_in, std::size_t d_out, std::size_t count, std::size_t rank,
                                    bool with_router) {
  return count * rank * (d_in + d_out) + (with_router ? d_in * count : 0);
}

std::vector<double> materialize_delta(const Expert& expert) {
  const std::size_t r = expert.A.dim(0), d_in = expert.A.dim(1), d_out = expert.B.dim(0);
  const auto A = expert.A.values();
  const auto B = expert.B.values();
  std::vector<double> dense(d_out * d_in, 0.0);
  for (std::size_t o = 0; o < d_out; ++o)
    for (std::size_t k = 0; k < r; ++k)
      for (std::size_t i = 0; i < d_in; ++i) dense[o * d_in + i] += B[o * r + k] * A[k * d_in + i];
  return dense;
}

}  // namespace xprompt
