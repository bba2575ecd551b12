// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks over every tensor op, the composite modules and
// a tiny end-to-end model.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "xprompt/tensor.hpp"

namespace xprompt {

struct GradCheckResult {
  std::string name;
  double max_error = 0.0;
  std::size_t cases = 0;
};

/// Like grad_check but over several parameter leaves at once, perturbed in
/// place and restored. `stride` > 1 checks every stride-th coordinate of
/// each tensor (offset by `offset` mod stride).
double grad_check_params(const std::function<Tensor()>& loss, std::span<const Tensor> params, double eps,
                         std::size_t stride = 1, std::size_t offset = 0);

/// Every catalog op over `seeds` random shapes and values.
std::vector<GradCheckResult> op_gradchecks(std::size_t seeds, std::uint64_t base_seed);

/// Losses, experts, prompter and a decoder pass.
std::vector<GradCheckResult> module_gradchecks(std::size_t seeds, std::uint64_t base_seed);

/// D = 16, L = 2, 32 x 32 frames, K = 2, r = 2: the pretrain-stage model
/// over all parameters, and the mvp+maes model over its trainable ones.
std::vector<GradCheckResult> model_gradchecks(std::uint64_t seed);

using ResultSink = std::function<void(const GradCheckResult&)>;

/// All of the above in order; `sink` sees each result as it completes.
std::vector<GradCheckResult> run_gradcheck_suite(std::size_t seeds, std::uint64_t seed, const ResultSink& sink = {});

}  // namespace xprompt
