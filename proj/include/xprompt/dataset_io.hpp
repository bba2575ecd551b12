// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset layout, one directory per sequence:
//   frame_%04d.ppm  P6, 8-bit RGB
//   x_%04d.pgm      P5, 8-bit X map
//   mask_%04d.pgm   P5, pixel value = object id
//   meta.json       {"T", "H", "W", "O", "scenario"}
// Frame numbers start at 0. Values v in [0, 1] map to round(255 v).

#pragma once

#include <string>
#include <vector>

#include "xprompt/video.hpp"

namespace xprompt {

void write_ppm(const std::string& path, const Tensor& rgb);
Tensor read_ppm(const std::string& path);
void write_pgm(const std::string& path, const Tensor& gray);
Tensor read_pgm(const std::string& path);
void write_mask_pgm(const std::string& path, const SegmentationMask& mask);
SegmentationMask read_mask_pgm(const std::string& path);

void save_sample(const std::string& dir, const VideoSample& sample);
VideoSample load_sample(const std::string& dir);

/// Writes each sample to root/<name>.
void save_dataset(const std::string& root, const std::vector<VideoSample>& samples);
/// Every subdirectory of `root` holding a meta.json, ordered by name.
/// Missing or empty roots raise IoError.
std::vector<VideoSample> load_dataset(const std::string& root);

}  // namespace xprompt
