// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "xprompt/errors.hpp"

namespace xprompt {

using namespace ops;

namespace {

void check_pair(const Tensor& t, const SegmentationMask& gt, const char* op) {
  if (t.rank() != 3 || t.dim(0) != gt.height || t.dim(1) != gt.width) {
    throw ContractError(std::string(op) + ": prediction " + shape_str(t.shape()) + " does not match a " +
                        std::to_string(gt.height) + "x" + std::to_string(gt.width) + " mask");
  }
  if (gt.max_id() >= t.dim(2)) throw ContractError(std::string(op) + ": mask id outside the class range");
}

}  // namespace

Tensor one_hot(const SegmentationMask& mask, std::size_t classes) {
  std::vector<double> v(mask.ids.size() * classes, 0.0);
  for (std::size_t p = 0; p < mask.ids.size(); ++p) {
    if (mask.ids[p] >= classes) throw ContractError("one_hot: id exceeds class count");
    v[p * classes + mask.ids[p]] = 1.0;
  }
  return Tensor::from({mask.height, mask.width, classes}, std::move(v));
}

Tensor soft_jaccard_loss(const Tensor& probs, const SegmentationMask& gt) {
  check_pair(probs, gt, "soft_jaccard_loss");
  const std::size_t C = probs.dim(2), pixels = gt.ids.size();
  const SegmentationMask predicted = argmax_mask(probs);

  std::vector<Tensor> ious;
  std::vector<std::size_t> idx(pixels);
  for (std::size_t o = 1; o < C; ++o) {
    const std::size_t in_gt = gt.count(static_cast<std::uint8_t>(o));
    if (in_gt == 0 && predicted.count(static_cast<std::uint8_t>(o)) == 0) continue;
    for (std::size_t p = 0; p < pixels; ++p) idx[p] = p * C + o;
    const Tensor p_o = gather(probs, idx);
    std::vector<double> g(pixels);
    for (std::size_t p = 0; p < pixels; ++p) g[p] = gt.ids[p] == o ? 1.0 : 0.0;
    const Tensor g_o = Tensor::from({pixels}, std::move(g));
    const Tensor inter = sum(mul(p_o, g_o));
    const Tensor uni = sub(add_scalar(sum(p_o), static_cast<double>(in_gt)), inter);
    ious.push_back(div(inter, uni));
  }
  if (ious.empty()) return Tensor::scalar(0.0);
  const Tensor total = ious.size() == 1 ? ious.front() : sum(concat(std::span<const Tensor>(ious), 0));
  return add_scalar(scale(total, -1.0 / static_cast<double>(ious.size())), 1.0);
}

Tensor pixel_cross_entropy(const Tensor& logits, const SegmentationMask& gt) {
  check_pair(logits, gt, "pixel_cross_entropy");
  const std::size_t C = logits.dim(2);
  std::vector<std::size_t> idx(gt.ids.size());
  for (std::size_t p = 0; p < idx.size(); ++p) idx[p] = p * C + gt.ids[p];
  return scale(gather(log_softmax(logits), idx), -1.0);
}

Tensor bootstrapped_ce_loss(const Tensor& logits, const SegmentationMask& gt, double keep_ratio) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) throw ContractError("bootstrapped_ce_loss: keep_ratio must be in (0, 1]");
  const Tensor ce = pixel_cross_entropy(logits, gt);
  const std::size_t n = ce.numel();
  const auto keep = std::min<std::size_t>(
      n, std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(keep_ratio * static_cast<double>(n) - 1e-9))));
  if (keep == n) return mean(ce);
  const auto values = ce.values();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                   [&values](std::size_t a, std::size_t b) {
                     return values[a] > values[b] || (values[a] == values[b] && a < b);
                   });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return mean(gather(ce, order));
}

Tensor combined_loss(const Tensor& logits, const SegmentationMask& gt, double keep_ratio) {
  const Tensor ce = bootstrapped_ce_loss(logits, gt, keep_ratio);
  const Tensor jac = soft_jaccard_loss(softmax(logits), gt);
  return scale(add(ce, jac), 0.5);
}

double keep_ratio_at(std::size_t step, std::size_t total_steps, double warmup_fraction, double final_ratio) {
  if (total_steps == 0) return 1.0;
  const double warm = warmup_fraction * static_cast<double>(total_steps);
  const double s = static_cast<double>(step);
  if (s < warm) return 1.0;
  const double span = static_cast<double>(total_steps) - 1.0 - warm;
  if (span <= 0.0) return final_ratio;
  const double t = std::clamp((s - warm) / span, 0.0, 1.0);
  return 1.0 + (final_ratio - 1.0) * t;
}

}  // namespace xprompt
