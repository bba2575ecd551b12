// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Region (J) and boundary (F) similarity for one object id.

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "xprompt/video.hpp"

namespace xprompt {

/// |pred_o & gt_o| / |pred_o | gt_o|; 1 when both are empty.
double metric_j(const SegmentationMask& pred, const SegmentationMask& gt, std::uint8_t id);

/// Foreground pixels of `id` with a 4-neighbour outside the object or on
/// the frame edge; 1 marks a boundary pixel.
std::vector<std::uint8_t> boundary_map(const SegmentationMask& mask, std::uint8_t id);

/// Contour F-measure: a boundary pixel matches when the other boundary has a
/// pixel within Euclidean distance `tol`. 1 when both boundaries are empty,
/// 0 when exactly one is.
double metric_f(const SegmentationMask& pred, const SegmentationMask& gt, std::uint8_t id, double tol);

double metric_jf(double j, double f);

/// ceil(0.008 * diagonal) pixels.
double default_boundary_tol(std::size_t height, std::size_t width);

struct SequenceScore {
  double J = 0.0;
  double F = 0.0;
  double JF = 0.0;
};

/// Scores frames 1..T-1 (frame 0 is given): per object the mean over frames,
/// then the mean over objects 1..objects. A single-frame sequence scores 1.
SequenceScore score_sequence(const std::vector<SegmentationMask>& pred, const std::vector<SegmentationMask>& gt,
                             std::size_t objects, double tol);

}  // namespace xprompt
