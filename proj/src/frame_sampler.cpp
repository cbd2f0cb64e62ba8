// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/frame_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qclip/error.hpp"
#include "qclip/random.hpp"

namespace qclip {

namespace {

void check_count(int n, int t) {
  require(n >= 1, ErrorCategory::kInputContract, "sampler: video has no frames");
  require(t >= 1 && t <= n, ErrorCategory::kInputContract,
          "sampler: target count " + std::to_string(t) + " outside [1, " +
              std::to_string(n) + "]");
}

double frame_mse(const Frame& a, const Frame& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = static_cast<double>(a.pixels[i]) - static_cast<double>(b.pixels[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.pixels.size());
}

// Segment [begin, end) for segment s of t over n frames; the first n % t
// segments get one extra frame.
std::pair<int, int> segment_bounds(int n, int t, int s) {
  const int base = n / t;
  const int extra = n % t;
  const int begin = s * base + std::min(s, extra);
  const int len = base + (s < extra ? 1 : 0);
  return {begin, begin + len};
}

template <typename CenterFn>
std::vector<int> sample_segments(const MotionProfile& profile, int t, CenterFn center) {
  const int n = profile.frame_count();
  check_count(n, t);
  std::vector<int> out;
  out.reserve(t);
  for (int s = 0; s < t; ++s) {
    const auto [begin, end] = segment_bounds(n, t, s);
    std::vector<double> seg(profile.values.begin() + begin, profile.values.begin() + end);
    const double c = center(seg);
    int best = begin;
    double best_dist = std::abs(profile.values[begin] - c);
    for (int i = begin + 1; i < end; ++i) {
      const double d = std::abs(profile.values[i] - c);
      if (d < best_dist) {
        best = i;
        best_dist = d;
      }
    }
    out.push_back(best);
  }
  return out;
}

}  // namespace

std::string_view strategy_name(SamplingStrategy s) {
  switch (s) {
    case SamplingStrategy::kRandom: return "RandSampl";
    case SamplingStrategy::kUniform: return "UNISampl";
    case SamplingStrategy::kUniformRandomStart: return "UNIRandStart";
    case SamplingStrategy::kMseSortedUniform: return "MSESortedUNI";
    case SamplingStrategy::kSegmentMseMean: return "SegMSEMean";
    case SamplingStrategy::kSegmentMseMedian: return "SegMSEMedian";
    case SamplingStrategy::kMixed: return "Mixed";
  }
  return "?";
}

SamplingStrategy parse_strategy(std::string_view name) {
  for (auto s : kBaseStrategies) {
    if (strategy_name(s) == name) return s;
  }
  if (name == strategy_name(SamplingStrategy::kMixed)) return SamplingStrategy::kMixed;
  fail(ErrorCategory::kConfig, "unknown sampling strategy '" + std::string(name) + "'");
}

bool needs_profile(SamplingStrategy s) {
  return s == SamplingStrategy::kMseSortedUniform || s == SamplingStrategy::kSegmentMseMean ||
         s == SamplingStrategy::kSegmentMseMedian || s == SamplingStrategy::kMixed;
}

MotionProfile motion_profile(const FrameSequence& frames) {
  const int n = frames.count();
  require(n >= 2, ErrorCategory::kInputContract,
          "motion_profile: need at least two frames, got " + std::to_string(n));
  frames.validate();

  std::vector<double> pair(n - 1);
  for (int i = 0; i + 1 < n; ++i) pair[i] = frame_mse(frames.frames[i], frames.frames[i + 1]);

  MotionProfile profile;
  profile.values.resize(n);
  profile.values.front() = pair.front();
  profile.values.back() = pair.back();
  for (int i = 1; i + 1 < n; ++i) profile.values[i] = 0.5 * (pair[i - 1] + pair[i]);
  return profile;
}

std::vector<int> sample_uniform(int n, int t) {
  check_count(n, t);
  std::vector<int> out(t);
  // floor((i + 0.5) * n / t) in exact integer arithmetic
  for (int i = 0; i < t; ++i) {
    out[i] = static_cast<int>((static_cast<std::int64_t>(2 * i + 1) * n) / (2 * t));
  }
  return out;
}

std::vector<int> sample_random(int n, int t, std::uint64_t seed) {
  check_count(n, t);
  Rng rng(seed);
  std::vector<int> pool(n);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < t; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(t);
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<int> sample_uniform_random_start(int n, int t, std::uint64_t seed) {
  check_count(n, t);
  Rng rng(seed);
  const double span = static_cast<double>(n) / t;
  std::uniform_real_distribution<double> offset_dist(0.0, span);
  const double offset = offset_dist(rng);
  std::vector<int> out(t);
  for (int i = 0; i < t; ++i) {
    out[i] = std::min(n - 1, static_cast<int>(std::floor(i * span + offset)));
  }
  return out;
}

std::vector<int> sample_mse_sorted_uniform(const MotionProfile& profile, int t) {
  const int n = profile.frame_count();
  check_count(n, t);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return profile.values[a] > profile.values[b];
  });
  std::vector<int> out;
  out.reserve(t);
  for (int pos : sample_uniform(n, t)) out.push_back(order[pos]);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> sample_seg_mse_mean(const MotionProfile& profile, int t) {
  return sample_segments(profile, t, [](const std::vector<double>& seg) {
    return std::accumulate(seg.begin(), seg.end(), 0.0) / static_cast<double>(seg.size());
  });
}

std::vector<int> sample_seg_mse_median(const MotionProfile& profile, int t) {
  return sample_segments(profile, t, [](std::vector<double> seg) {
    std::sort(seg.begin(), seg.end());
    const std::size_t m = seg.size() / 2;
    return seg.size() % 2 == 1 ? seg[m] : 0.5 * (seg[m - 1] + seg[m]);
  });
}

MixedDraw sample_mixed(int n, int t, const MotionProfile& profile, std::uint64_t seed) {
  check_count(n, t);
  require(profile.frame_count() == n, ErrorCategory::kInputContract,
          "sample_mixed: profile length differs from frame count");
  Rng rng(seed);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(std::size(kBaseStrategies)) - 1);
  const SamplingStrategy chosen = kBaseStrategies[pick(rng)];
  SamplingPlan plan{chosen, t, derive_seed(seed, {1})};
  return {chosen, sample_frames(n, plan, &profile)};
}

std::vector<int> sample_frames(int n, const SamplingPlan& plan, const MotionProfile* profile) {
  if (needs_profile(plan.strategy)) {
    require(profile != nullptr, ErrorCategory::kInputContract,
            std::string(strategy_name(plan.strategy)) + " requires a motion profile");
    require(profile->frame_count() == n, ErrorCategory::kInputContract,
            "motion profile length differs from frame count");
  }
  switch (plan.strategy) {
    case SamplingStrategy::kRandom: return sample_random(n, plan.target_count, plan.seed);
    case SamplingStrategy::kUniform: return sample_uniform(n, plan.target_count);
    case SamplingStrategy::kUniformRandomStart:
      return sample_uniform_random_start(n, plan.target_count, plan.seed);
    case SamplingStrategy::kMseSortedUniform:
      return sample_mse_sorted_uniform(*profile, plan.target_count);
    case SamplingStrategy::kSegmentMseMean: return sample_seg_mse_mean(*profile, plan.target_count);
    case SamplingStrategy::kSegmentMseMedian:
      return sample_seg_mse_median(*profile, plan.target_count);
    case SamplingStrategy::kMixed:
      return sample_mixed(n, plan.target_count, *profile, plan.seed).indices;
  }
  fail(ErrorCategory::kConfig, "unhandled sampling strategy");
}

FramePlan plan_frames(int n, const SamplingPlan& plan, const MotionProfile* profile) {
  require(n >= 1, ErrorCategory::kInputContract, "plan_frames: video has no frames");
  if (n >= plan.target_count) return {sample_frames(n, plan, profile), false};
  FramePlan out;
  out.repeated = true;
  out.indices.reserve(plan.target_count);
  for (int i = 0; i < plan.target_count; ++i) out.indices.push_back(i % n);
  return out;
}

}  // namespace qclip
