// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace qclip {

// One RGB frame, interleaved HxWx3, values in [0, 1].
struct Frame {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Frame() = default;
  Frame(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0.0f) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::size_t size() const { return pixels.size(); }
};

struct FrameSequence {
  std::string source_id;
  std::vector<Frame> frames;
  // Index of each frame in the decoded source (after any stride).
  std::vector<int> original_indices;

  int count() const { return static_cast<int>(frames.size()); }
  int height() const { return frames.empty() ? 0 : frames.front().height; }
  int width() const { return frames.empty() ? 0 : frames.front().width; }

  // Throws ErrorCategory::kInputContract if shapes differ across frames.
  void validate() const;

  // Subsequence at the given indices (into this sequence).
  FrameSequence select(std::span<const int> indices) const;
};

}  // namespace qclip
