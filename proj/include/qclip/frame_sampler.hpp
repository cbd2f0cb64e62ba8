// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Motion profiles and the frame sampling strategies.
//
// The motion profile m_t of frame t is the mean squared pixel difference to
// its neighbours: interior frames average the MSE to the previous and next
// frame, the first and last frames use their single neighbour. MSE divides by
// H*W*3.
//
// Every sampler returns exactly T distinct indices in ascending order and
// throws kInputContract when T is outside [1, N].

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qclip/frames.hpp"

namespace qclip {

struct MotionProfile {
  std::vector<double> values;
  int frame_count() const { return static_cast<int>(values.size()); }
};

enum class SamplingStrategy {
  kRandom,              // RandSampl
  kUniform,             // UNISampl
  kUniformRandomStart,  // UNIRandStart
  kMseSortedUniform,    // MSESortedUNI
  kSegmentMseMean,      // SegMSEMean
  kSegmentMseMedian,    // SegMSEMedian
  kMixed,               // Mixed
};

inline constexpr SamplingStrategy kBaseStrategies[] = {
    SamplingStrategy::kRandom,           SamplingStrategy::kUniform,
    SamplingStrategy::kUniformRandomStart, SamplingStrategy::kMseSortedUniform,
    SamplingStrategy::kSegmentMseMean,   SamplingStrategy::kSegmentMseMedian,
};

std::string_view strategy_name(SamplingStrategy s);
SamplingStrategy parse_strategy(std::string_view name);
bool needs_profile(SamplingStrategy s);

struct SamplingPlan {
  SamplingStrategy strategy = SamplingStrategy::kUniform;
  int target_count = 8;
  std::uint64_t seed = 0;
};

MotionProfile motion_profile(const FrameSequence& frames);

std::vector<int> sample_uniform(int n, int t);
std::vector<int> sample_random(int n, int t, std::uint64_t seed);
std::vector<int> sample_uniform_random_start(int n, int t, std::uint64_t seed);
std::vector<int> sample_mse_sorted_uniform(const MotionProfile& profile, int t);
std::vector<int> sample_seg_mse_mean(const MotionProfile& profile, int t);
std::vector<int> sample_seg_mse_median(const MotionProfile& profile, int t);

struct MixedDraw {
  SamplingStrategy chosen;
  std::vector<int> indices;
};
MixedDraw sample_mixed(int n, int t, const MotionProfile& profile, std::uint64_t seed);

// Dispatches on plan.strategy. `profile` is required for the MSE-based and
// mixed strategies.
std::vector<int> sample_frames(int n, const SamplingPlan& plan,
                               const MotionProfile* profile);

struct FramePlan {
  std::vector<int> indices;
  bool repeated = false;  // true when N < T forced cyclic repetition
};

// Pipeline-level entry: for N >= T identical to sample_frames; for N < T
// takes every frame and repeats the list cyclically up to length T.
FramePlan plan_frames(int n, const SamplingPlan& plan, const MotionProfile* profile);

}  // namespace qclip
