// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0

#include "xprompt/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "xprompt/errors.hpp"
#include "xprompt/rng.hpp"

namespace xprompt {

namespace {

using Color = std::array<double, 3>;

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

struct Shape2d {
  bool ellipse = false;
  double cy = 0, cx = 0;  // centre
  double hy = 0, hx = 0;  // half extents
  double vy = 0, vx = 0;  // velocity, pixels per frame
  Color color{};

  bool covers(double y, double x) const {
    const double dy = (y - cy) / hy, dx = (x - cx) / hx;
    return ellipse ? dy * dy + dx * dx <= 1.0 : std::abs(dy) <= 1.0 && std::abs(dx) <= 1.0;
  }

  void advance(double height, double width) {
    cy += vy, cx += vx;
    if (cy - hy < 0) cy = 2 * hy - cy, vy = -vy;
    if (cy + hy > height - 1) cy = 2 * (height - 1 - hy) - cy, vy = -vy;
    if (cx - hx < 0) cx = 2 * hx - cx, vx = -vx;
    if (cx + hx > width - 1) cx = 2 * (width - 1 - hx) - cx, vx = -vx;
    cy = std::clamp(cy, hy, height - 1 - hy);
    cx = std::clamp(cx, hx, width - 1 - hx);
  }
};

struct Background {
  Color base{}, grad_y{}, grad_x{}, wave{};
  double fy = 0, fx = 0, phase = 0;

  Color at(double y, double x, double height, double width) const {
    Color c{};
    const double s = std::sin(fy * y + fx * x + phase);
    for (int k = 0; k < 3; ++k) {
      c[k] = base[k] + grad_y[k] * (y / height - 0.5) + grad_x[k] * (x / width - 0.5) + wave[k] * s;
    }
    return c;
  }
};

Shape2d random_shape(const SynthConfig& cfg, Rng& rng) {
  Shape2d s;
  s.ellipse = rng.uniform() < 0.5;
  s.hy = rng.uniform(cfg.min_size, cfg.max_size) / 2.0;
  s.hx = rng.uniform(cfg.min_size, cfg.max_size) / 2.0;
  const double h = static_cast<double>(cfg.height), w = static_cast<double>(cfg.width);
  s.cy = rng.uniform(s.hy, h - 1 - s.hy);
  s.cx = rng.uniform(s.hx, w - 1 - s.hx);
  const double speed = rng.uniform(cfg.min_speed, cfg.max_speed);
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  s.vy = speed * std::sin(angle), s.vx = speed * std::cos(angle);
  return s;
}

Color distinct_color(const Color& avoid, Rng& rng) {
  Color c{};
  for (int attempt = 0; attempt < 64; ++attempt) {
    double dist = 0.0;
    for (int k = 0; k < 3; ++k) {
      c[k] = rng.uniform(0.05, 0.95);
      dist = std::max(dist, std::abs(c[k] - avoid[k]));
    }
    if (dist > 0.35) break;
  }
  return c;
}

}  // namespace

VideoSample synth_sequence(const SynthConfig& cfg, std::size_t index) {
  cfg.validate();
  if (cfg.max_size > static_cast<double>(std::min(cfg.height, cfg.width)) - 2.0) {
    throw ContractError("synth: objects of size " + std::to_string(cfg.max_size) + " do not fit a " +
                        std::to_string(cfg.height) + "x" + std::to_string(cfg.width) + " frame");
  }
  if (cfg.max_objects > 255) throw ContractError("synth: at most 255 objects");
  Rng rng(Rng::mix(cfg.seed, index));
  const std::size_t H = cfg.height, W = cfg.width, T = cfg.frames;
  const double h = static_cast<double>(H), w = static_cast<double>(W);
  const double sev = cfg.severity;

  Background bg;
  for (int k = 0; k < 3; ++k) {
    bg.base[k] = rng.uniform(0.3, 0.7);
    bg.grad_y[k] = rng.uniform(-0.2, 0.2);
    bg.grad_x[k] = rng.uniform(-0.2, 0.2);
    bg.wave[k] = rng.uniform(0.0, 0.06);
  }
  bg.fy = rng.uniform(0.05, 0.3), bg.fx = rng.uniform(0.05, 0.3), bg.phase = rng.uniform(0.0, 6.283);

  const auto O = static_cast<std::size_t>(
      rng.uniform_int(static_cast<int>(cfg.min_objects), static_cast<int>(cfg.max_objects)));
  std::vector<Shape2d> objects;
  std::vector<double> heat;
  // Place objects so each one shows a reasonable share of itself in frame 1.
  for (int attempt = 0; attempt < 50; ++attempt) {
    objects.clear();
    for (std::size_t o = 0; o < O; ++o) {
      Shape2d s = random_shape(cfg, rng);
      s.color = distinct_color(bg.at(s.cy, s.cx, h, w), rng);
      objects.push_back(s);
    }
    std::vector<std::size_t> visible(O, 0), area(O, 0);
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        std::size_t top = 0;
        for (std::size_t o = 0; o < O; ++o) {
          if (objects[o].covers(double(y), double(x))) ++area[o], top = o + 1;
        }
        if (top) ++visible[top - 1];
      }
    }
    bool ok = true;
    for (std::size_t o = 0; o < O; ++o) ok = ok && visible[o] * 2 >= area[o] && visible[o] > 0;
    if (ok) break;
  }
  for (std::size_t o = 0; o < O; ++o) heat.push_back(rng.uniform(0.75, 0.92));

  std::vector<Shape2d> distractors;
  if (cfg.corruption == Corruption::clutter) {
    const auto n = 2 + static_cast<std::size_t>(std::lround(4.0 * sev));
    for (std::size_t i = 0; i < n; ++i) {
      Shape2d s = random_shape(cfg, rng);
      const Color& like = objects[i % O].color;
      for (int k = 0; k < 3; ++k) s.color[k] = std::clamp(like[k] + rng.uniform(-0.1, 0.1) * (1.0 - sev), 0.0, 1.0);
      distractors.push_back(s);
    }
  }
  const double depth_far = rng.uniform(0.1, 0.25);
  std::vector<double> depth;
  for (std::size_t o = 0; o < O; ++o) depth.push_back(rng.uniform(0.6, 0.95));

  // Mean background colour, the grey level low contrast pulls towards.
  Color mean_bg{};
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      const Color c = bg.at(double(y), double(x), h, w);
      for (int k = 0; k < 3; ++k) mean_bg[k] += c[k] / (h * w);
    }
  }

  VideoSample sample;
  char name[32];
  std::snprintf(name, sizeof name, "seq_%04zu", index);
  sample.name = name;
  sample.objects = O;
  sample.scenario = to_string(cfg.corruption);

  SegmentationMask previous;
  for (std::size_t t = 0; t < T; ++t) {
    if (t > 0) {
      for (auto& s : objects) s.advance(h, w);
      for (auto& s : distractors) s.advance(h, w);
    }
    SegmentationMask mask(H, W);
    std::vector<double> rgb(H * W * 3), xv(H * W);
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double fy = double(y), fx = double(x);
        const Color back = bg.at(fy, fx, h, w);
        Color c = back;
        for (const auto& d : distractors) {
          if (d.covers(fy, fx)) c = d.color;
        }
        std::size_t id = 0;
        for (std::size_t o = 0; o < O; ++o) {
          if (objects[o].covers(fy, fx)) id = o + 1;
        }
        if (id) {
          const Color& oc = objects[id - 1].color;
          const double blend = cfg.corruption == Corruption::low_contrast ? sev : 0.0;
          for (int k = 0; k < 3; ++k) c[k] = (1.0 - blend) * oc[k] + blend * back[k];
        }
        mask.at(y, x) = static_cast<std::uint8_t>(id);

        double noise_std = 0.01;
        switch (cfg.corruption) {
          case Corruption::none:
          case Corruption::clutter: break;
          case Corruption::low_contrast:
            for (int k = 0; k < 3; ++k) c[k] = mean_bg[k] + (1.0 - sev) * (c[k] - mean_bg[k]);
            noise_std += 0.03 * sev;
            break;
          case Corruption::darkness:
            for (int k = 0; k < 3; ++k) c[k] *= 1.0 - 0.9 * sev;
            noise_std += 0.04 * sev;
            break;
        }
        for (int k = 0; k < 3; ++k) rgb[(y * W + x) * 3 + k] = quantize(c[k] + rng.normal(0.0, noise_std));

        double xval = 0.0;
        switch (cfg.x_signal) {
          case XSignal::thermal:
            xval = id ? heat[id - 1] : 0.1 + 0.05 * std::sin(0.1 * fy + 0.07 * fx);
            break;
          case XSignal::depth:
            xval = id ? depth[id - 1] : depth_far + 0.15 * fy / h;
            break;
          case XSignal::event:
            xval = 0.05;
            break;
        }
        xv[y * W + x] = xval;
      }
    }
    if (cfg.x_signal == XSignal::event) {
      // Events fire where object membership changed since the previous
      // frame, and along object outlines.
      for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
          const std::uint8_t id = mask.at(y, x);
          bool edge = t > 0 && previous.at(y, x) != id;
          if (id) {
            edge = edge || y == 0 || x == 0 || y + 1 == H || x + 1 == W || mask.at(y - 1, x) != id ||
                   mask.at(y + 1, x) != id || mask.at(y, x - 1) != id || mask.at(y, x + 1) != id;
          }
          if (edge) xv[y * W + x] = 0.9;
        }
      }
    }
    for (double& v : xv) v = quantize(v + rng.normal(0.0, 0.02));

    sample.frames.push_back(Tensor::from({H, W, 3}, std::move(rgb)));
    sample.xmaps.push_back(Tensor::from({H, W, 1}, std::move(xv)));
    previous = mask;
    sample.masks.push_back(std::move(mask));
  }
  sample.validate();
  return sample;
}

std::vector<VideoSample> synth_generate(const SynthConfig& cfg) {
  std::vector<VideoSample> out;
  out.reserve(cfg.num_sequences);
  for (std::size_t i = 0; i < cfg.num_sequences; ++i) out.push_back(synth_sequence(cfg, i));
  return out;
}

namespace {

std::pair<double, double> split_means(const VideoSample& sample, std::size_t frame, bool x) {
  const auto& mask = sample.masks.at(frame);
  const auto v = x ? sample.xmaps.at(frame).values() : sample.frames.at(frame).values();
  const std::size_t c = x ? 1 : 3;
  double fg = 0, bgsum = 0;
  std::size_t nf = 0, nb = 0;
  for (std::size_t p = 0; p < mask.ids.size(); ++p) {
    double s = 0;
    for (std::size_t k = 0; k < c; ++k) s += v[p * c + k];
    s /= double(c);
    if (mask.ids[p]) fg += s, ++nf;
    else bgsum += s, ++nb;
  }
  return {nf ? fg / double(nf) : 0.0, nb ? bgsum / double(nb) : 0.0};
}

}  // namespace

std::pair<double, double> rgb_object_background_means(const VideoSample& sample, std::size_t frame) {
  return split_means(sample, frame, false);
}

std::pair<double, double> x_object_background_means(const VideoSample& sample, std::size_t frame) {
  return split_means(sample, frame, true);
}

}  // namespace xprompt
