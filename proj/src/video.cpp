// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/video.hpp"

#include <algorithm>

#include "xprompt/errors.hpp"

namespace xprompt {

std::size_t SegmentationMask::count(std::uint8_t id) const {
  return static_cast<std::size_t>(std::count(ids.begin(), ids.end(), id));
}

std::uint8_t SegmentationMask::max_id() const {
  return ids.empty() ? 0 : *std::max_element(ids.begin(), ids.end());
}

SegmentationMask argmax_mask(const Tensor& logits) {
  if (logits.rank() != 3) throw ContractError("argmax_mask: expected H x W x C logits");
  const std::size_t h = logits.dim(0), w = logits.dim(1), c = logits.dim(2);
  SegmentationMask out(h, w);
  const auto v = logits.values();
  for (std::size_t p = 0; p < h * w; ++p) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < c; ++k) {
      if (v[p * c + k] > v[p * c + best]) best = k;
    }
    out.ids[p] = static_cast<std::uint8_t>(best);
  }
  return out;
}

void VideoSample::validate() const {
  if (frames.empty()) throw ContractError("video '" + name + "': empty video");
  if (xmaps.size() != frames.size() || masks.size() != frames.size()) {
    throw ContractError("video '" + name + "': frame, x-map and mask counts differ");
  }
  const std::size_t h = height(), w = width();
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].shape() != Shape{h, w, 3} || xmaps[t].shape() != Shape{h, w, 1} || masks[t].height != h ||
        masks[t].width != w) {
      throw ContractError("video '" + name + "': frame " + std::to_string(t) + " has inconsistent dimensions");
    }
    if (masks[t].max_id() > objects) {
      throw ContractError("video '" + name + "': mask id exceeds object count");
    }
  }
  if (masks.front().count(0) == masks.front().ids.size()) {
    throw ContractError("video '" + name + "': first-frame mask is empty");
  }
}

}  // namespace xprompt
