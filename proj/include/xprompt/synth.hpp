// Copyright (c) 2026 The X-Prompt Desk Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic RGB-X video generator: rectangles and ellipses moving with
// wall bounces over a smooth textured background. The RGB stream can be
// corrupted (low contrast, darkness, clutter) while the X stream renders an
// object-correlated signal from the clean geometry. Every pixel value is a
// multiple of 1/255, so PPM/PGM storage is lossless.

#pragma once

#include <cstddef>
#include <vector>

#include "xprompt/config.hpp"
#include "xprompt/video.hpp"

namespace xprompt {

/// Sequence `index` of the dataset described by `cfg`; depends only on
/// (cfg, index). Throws ContractError when an object cannot fit the frame.
VideoSample synth_sequence(const SynthConfig& cfg, std::size_t index);

/// cfg.num_sequences sequences named seq_0000, seq_0001, ...
std::vector<VideoSample> synth_generate(const SynthConfig& cfg);

/// Mean of (R + G + B) / 3 over pixels with / without any object in
/// `frame` of `sample`; {object mean, background mean}.
std::pair<double, double> rgb_object_background_means(const VideoSample& sample, std::size_t frame);
std::pair<double, double> x_object_background_means(const VideoSample& sample, std::size_t frame);

}  // namespace xprompt
