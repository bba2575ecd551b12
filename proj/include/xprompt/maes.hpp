// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Multi-modal adaptation experts: K low-rank updates B_i A_i attached in
// parallel to a frozen linear layer and mixed per token by a softmax router.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "xprompt/param_store.hpp"
#include "xprompt/rng.hpp"
#include "xprompt/tensor.hpp"

namespace xprompt {

/// Low-rank update Delta W = B A with A: r x D_in and B: D_out x r.
struct Expert {
  Tensor A;
  Tensor B;

  std::size_t rank() const { return A.dim(0); }
};

/// Experts attached to one linear layer. `router` is D_in x K; a bank
/// without a router is plain LoRA and must hold exactly one expert.
struct ExpertBank {
  std::vector<Expert> experts;
  Tensor router;

  std::size_t size() const { return experts.size(); }
  bool routed() const { return router.defined(); }
};

enum class ExpertTarget { msa_output, ffn_first, ffn_second };

std::string_view to_string(ExpertTarget target);
ExpertTarget parse_expert_target(std::string_view name);

/// B (A h) for row tokens h: T x D_in, computed without forming B A.
Tensor expert_delta(const Tensor& h, const Expert& expert);

/// Per-token softmax(h w^R): T x K.
Tensor router_weights(const Tensor& h, const ExpertBank& bank);

/// Sum_i softmax_i(h_t w^R) * Delta h_i(h_t) per token t.
Tensor route(const Tensor& h, const ExpertBank& bank);

/// W0 h + b0 + route(h). `bank` may be null (plain frozen or trainable
/// linear). With a bank attached, W0 must be frozen, otherwise ConfigError.
Tensor adapted_linear(const Tensor& h, const Tensor& w0, const Tensor& b0, const ExpertBank* bank);

/// Registers `count` experts (and a router when `with_router`) under
/// `prefix` (e.g. "layer0.ffn-first"): names prefix.expert{i}.A|B and
/// prefix.router. A ~ N(0, 0.02^2), B = 0, router ~ N(0, 0.02^2).
ExpertBank make_expert_bank(ParamStore& store, const std::string& prefix, std::size_t d_in, std::size_t d_out,
                            std::size_t count, std::size_t rank, bool with_router, Rng& rng);

/// Closed-form parameter count of one bank.
std::size_t expert_bank_param_count(std::size_t d_in, std::size_t d_out, std::size_t count, std::size_t rank,
                                    bool with_router);

/// Dense Delta W_i = B_i A_i (D_out x D_in), for verification only.
std::vector<double> materialize_delta(const Expert& expert);

}  // namespace xprompt
