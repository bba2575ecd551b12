// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "xprompt/tensor.hpp"

namespace xprompt {

/// H x W grid of object ids, 0 = background.
struct SegmentationMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> ids;

  SegmentationMask() = default;
  SegmentationMask(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), ids(h * w, fill) {}

  std::uint8_t at(std::size_t y, std::size_t x) const { return ids[y * width + x]; }
  std::uint8_t& at(std::size_t y, std::size_t x) { return ids[y * width + x]; }
  std::size_t count(std::uint8_t id) const;
  std::uint8_t max_id() const;

  bool operator==(const SegmentationMask&) const = default;
};

/// Per-pixel argmax over the last axis of H x W x C logits; ties resolve
/// to the smallest id.
SegmentationMask argmax_mask(const Tensor& logits);

/// One synchronized RGB-X sequence with ground truth.
struct VideoSample {
  std::string name;
  std::vector<Tensor> frames;  // H x W x 3, values in [0, 1]
  std::vector<Tensor> xmaps;   // H x W x 1, values in [0, 1]
  std::vector<SegmentationMask> masks;
  std::size_t objects = 0;  // O
  std::string scenario;

  std::size_t length() const { return frames.size(); }
  std::size_t height() const { return masks.empty() ? 0 : masks.front().height; }
  std::size_t width() const { return masks.empty() ? 0 : masks.front().width; }
  /// Throws ContractError on inconsistent lengths or dimensions, ids above
  /// `objects`, or an empty first-frame mask.
  void validate() const;
};

}  // namespace xprompt
