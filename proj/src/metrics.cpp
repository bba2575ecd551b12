// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "xprompt/errors.hpp"

namespace xprompt {

namespace {

void check_dims(const SegmentationMask& a, const SegmentationMask& b, const char* op) {
  if (a.height != b.height || a.width != b.width) {
    throw ContractError(std::string(op) + ": mask dims differ (" + std::to_string(a.height) + "x" +
                        std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" + std::to_string(b.width) +
                        ")");
  }
}

// Number of boundary pixels in `from` that have a boundary pixel of `to`
// within distance tol.
std::size_t matched(const std::vector<std::uint8_t>& from, const std::vector<std::uint8_t>& to, std::size_t h,
                    std::size_t w, double tol) {
  const double span = std::min(tol, static_cast<double>(std::max(h, w)));
  const auto r = static_cast<std::ptrdiff_t>(std::floor(span));
  const double tol2 = tol * tol;
  std::size_t hits = 0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (!from[y * w + x]) continue;
      bool found = false;
      const auto y0 = std::max<std::ptrdiff_t>(0, std::ptrdiff_t(y) - r);
      const auto y1 = std::min<std::ptrdiff_t>(std::ptrdiff_t(h) - 1, std::ptrdiff_t(y) + r);
      const auto x0 = std::max<std::ptrdiff_t>(0, std::ptrdiff_t(x) - r);
      const auto x1 = std::min<std::ptrdiff_t>(std::ptrdiff_t(w) - 1, std::ptrdiff_t(x) + r);
      for (auto yy = y0; yy <= y1 && !found; ++yy) {
        for (auto xx = x0; xx <= x1; ++xx) {
          const double dy = double(yy) - double(y), dx = double(xx) - double(x);
          if (to[std::size_t(yy) * w + std::size_t(xx)] && dy * dy + dx * dx <= tol2) {
            found = true;
            break;
          }
        }
      }
      hits += found;
    }
  }
  return hits;
}

}  // namespace

double metric_j(const SegmentationMask& pred, const SegmentationMask& gt, std::uint8_t id) {
  check_dims(pred, gt, "metric_j");
  std::size_t inter = 0, uni = 0;
  for (std::size_t p = 0; p < gt.ids.size(); ++p) {
    const bool a = pred.ids[p] == id, b = gt.ids[p] == id;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::uint8_t> boundary_map(const SegmentationMask& mask, std::uint8_t id) {
  const std::size_t h = mask.height, w = mask.width;
  std::vector<std::uint8_t> out(h * w, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (mask.at(y, x) != id) continue;
      out[y * w + x] = y == 0 || x == 0 || y + 1 == h || x + 1 == w || mask.at(y - 1, x) != id ||
                       mask.at(y + 1, x) != id || mask.at(y, x - 1) != id || mask.at(y, x + 1) != id;
    }
  }
  return out;
}

double metric_f(const SegmentationMask& pred, const SegmentationMask& gt, std::uint8_t id, double tol) {
  check_dims(pred, gt, "metric_f");
  if (!(tol >= 0.0)) throw ContractError("metric_f: tolerance must be non-negative");
  const auto bp = boundary_map(pred, id), bg = boundary_map(gt, id);
  const auto np = static_cast<std::size_t>(std::count(bp.begin(), bp.end(), 1));
  const auto ng = static_cast<std::size_t>(std::count(bg.begin(), bg.end(), 1));
  if (np == 0 && ng == 0) return 1.0;
  if (np == 0 || ng == 0) return 0.0;
  const double precision = double(matched(bp, bg, gt.height, gt.width, tol)) / double(np);
  const double recall = double(matched(bg, bp, gt.height, gt.width, tol)) / double(ng);
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

double metric_jf(double j, double f) { return (j + f) / 2.0; }

double default_boundary_tol(std::size_t height, std::size_t width) {
  return std::ceil(0.008 * std::hypot(static_cast<double>(height), static_cast<double>(width)));
}

SequenceScore score_sequence(const std::vector<SegmentationMask>& pred, const std::vector<SegmentationMask>& gt,
                             std::size_t objects, double tol) {
  if (pred.size() != gt.size()) throw ContractError("score_sequence: prediction and ground-truth lengths differ");
  SequenceScore s;
  if (gt.size() < 2 || objects == 0) {
    s.J = s.F = s.JF = 1.0;
    return s;
  }
  const double frames = static_cast<double>(gt.size() - 1);
  for (std::size_t o = 1; o <= objects; ++o) {
    double j = 0.0, f = 0.0;
    for (std::size_t t = 1; t < gt.size(); ++t) {
      j += metric_j(pred[t], gt[t], static_cast<std::uint8_t>(o));
      f += metric_f(pred[t], gt[t], static_cast<std::uint8_t>(o), tol);
    }
    s.J += j / frames;
    s.F += f / frames;
  }
  s.J /= static_cast<double>(objects);
  s.F /= static_cast<double>(objects);
  s.JF = metric_jf(s.J, s.F);
  return s;
}

}  // namespace xprompt
