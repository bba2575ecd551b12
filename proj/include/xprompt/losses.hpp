// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

#include "xprompt/tensor.hpp"
#include "xprompt/video.hpp"

namespace xprompt {

/// 1 - mean over objects o >= 1 of soft IoU(p_o, g_o). Objects missing from
/// both the ground truth and the argmax of `probs` are skipped; with nothing
/// left the loss is a constant 0. probs: H x W x (O + 1), rows normalized.
Tensor soft_jaccard_loss(const Tensor& probs, const SegmentationMask& gt);

/// Per-pixel cross-entropy -log softmax(logits)[gt], shape {H * W}.
Tensor pixel_cross_entropy(const Tensor& logits, const SegmentationMask& gt);

/// Mean of the ceil(keep_ratio * H * W) largest per-pixel cross-entropies.
/// Ties between equal losses are broken by pixel index.
Tensor bootstrapped_ce_loss(const Tensor& logits, const SegmentationMask& gt, double keep_ratio);

/// 0.5 * bootstrapped CE + 0.5 * soft Jaccard of softmax(logits).
Tensor combined_loss(const Tensor& logits, const SegmentationMask& gt, double keep_ratio);

/// 1 for the first `warmup_fraction` of steps, then linear to `final_ratio`
/// at the last step.
double keep_ratio_at(std::size_t step, std::size_t total_steps, double warmup_fraction, double final_ratio);

/// Constant H x W x C one-hot planes of a mask over C classes.
Tensor one_hot(const SegmentationMask& mask, std::size_t classes);

}  // namespace xprompt
