// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "oracles.hpp"
#include "qclip/error.hpp"
#include "qclip/frame_sampler.hpp"

using namespace qclip;
using Catch::Approx;

namespace {

FrameSequence random_video(std::mt19937_64& rng, int n, int h, int w) {
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  FrameSequence s;
  for (int i = 0; i < n; ++i) {
    Frame f(h, w);
    for (float& v : f.pixels) v = u(rng);
    s.frames.push_back(std::move(f));
    s.original_indices.push_back(i);
  }
  return s;
}

FrameSequence constant_video(int n, float value) {
  FrameSequence s;
  for (int i = 0; i < n; ++i) {
    Frame f(3, 3);
    std::fill(f.pixels.begin(), f.pixels.end(), value);
    s.frames.push_back(f);
  }
  return s;
}

MotionProfile profile_of(std::vector<double> v) { return MotionProfile{std::move(v)}; }

void check_valid(const std::vector<int>& idx, int n, int t) {
  REQUIRE(static_cast<int>(idx.size()) == t);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    REQUIRE(idx[i] >= 0);
    REQUIRE(idx[i] < n);
    if (i > 0) REQUIRE(idx[i] > idx[i - 1]);
  }
}

}  // namespace

TEST_CASE("motion profile of identical frames is zero", "[sampler]") {
  const auto p = motion_profile(constant_video(5, 0.3f));
  for (double v : p.values) REQUIRE(v == 0.0);
}

TEST_CASE("motion profile of zero versus one frames is one", "[sampler]") {
  FrameSequence s = constant_video(1, 0.0f);
  s.frames.push_back(constant_video(1, 1.0f).frames[0]);
  const auto p = motion_profile(s);
  REQUIRE(p.values == std::vector<double>{1.0, 1.0});
}

TEST_CASE("motion profile requires two frames", "[sampler]") {
  REQUIRE_THROWS_AS(motion_profile(constant_video(1, 0.0f)), Error);
}

TEST_CASE("motion profile matches loop oracle on random videos", "[sampler]") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 6);
    const auto video = random_video(rng, n, 2 + static_cast<int>(rng() % 3), 2 + static_cast<int>(rng() % 3));
    const auto got = motion_profile(video).values;
    const auto want = oracle::motion_profile(video);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) REQUIRE(std::abs(got[i] - want[i]) <= 1e-7);
  }
}

TEST_CASE("motion profile boundary frames use their single neighbour", "[sampler]") {
  // Frames 0, 0, 1: the first frame only sees frame 1 (identical), the last
  // only sees frame 1 (unit difference), the middle averages both.
  FrameSequence s = constant_video(2, 0.0f);
  s.frames.push_back(constant_video(1, 1.0f).frames[0]);
  const auto p = motion_profile(s).values;
  REQUIRE(p[0] == 0.0);
  REQUIRE(p[1] == Approx(0.5));
  REQUIRE(p[2] == Approx(1.0));
}

TEST_CASE("motion profile reverses with the frames", "[sampler]") {
  std::mt19937_64 rng(3);
  auto video = random_video(rng, 6, 3, 2);
  const auto fwd = motion_profile(video).values;
  std::reverse(video.frames.begin(), video.frames.end());
  auto bwd = motion_profile(video).values;
  std::reverse(bwd.begin(), bwd.end());
  for (std::size_t i = 0; i < fwd.size(); ++i) REQUIRE(fwd[i] == Approx(bwd[i]).epsilon(1e-12));
}

TEST_CASE("uniform sampling hand cases", "[sampler]") {
  REQUIRE(sample_uniform(16, 8) == std::vector<int>{1, 3, 5, 7, 9, 11, 13, 15});
  REQUIRE(sample_uniform(10, 3) == std::vector<int>{1, 5, 8});
  REQUIRE(sample_uniform(5, 5) == std::vector<int>{0, 1, 2, 3, 4});
  REQUIRE_THROWS_AS(sample_uniform(3, 4), Error);
}

TEST_CASE("random strategies are deterministic and full when T equals N", "[sampler]") {
  REQUIRE(sample_random(20, 5, 11) == sample_random(20, 5, 11));
  REQUIRE(sample_uniform_random_start(20, 5, 11) == sample_uniform_random_start(20, 5, 11));
  const std::vector<int> all{0, 1, 2, 3, 4, 5};
  REQUIRE(sample_random(6, 6, 3) == all);
  REQUIRE(sample_uniform_random_start(6, 6, 3) == all);
}

TEST_CASE("random sampling selects each index with frequency T over N", "[sampler]") {
  std::vector<int> counts(100, 0);
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    for (int i : sample_random(100, 8, seed)) ++counts[i];
  }
  for (int c : counts) REQUIRE(std::abs(c / 10000.0 - 0.08) <= 0.01);
}

TEST_CASE("MSE-sorted uniform hand cases", "[sampler]") {
  REQUIRE(sample_mse_sorted_uniform(profile_of({0, 9, 1, 5}), 2) == std::vector<int>{0, 3});
  // T = 1 takes sorted position floor(N / 2): descending order is 2, 3, 1, 0.
  REQUIRE(sample_mse_sorted_uniform(profile_of({0.1, 0.2, 7.0, 0.3}), 1) == std::vector<int>{1});
  // With N = 1 the single frame is also the argmax.
  REQUIRE(sample_mse_sorted_uniform(profile_of({4.0}), 1) == std::vector<int>{0});
  const MotionProfile flat = profile_of(std::vector<double>(16, 0.25));
  REQUIRE(sample_mse_sorted_uniform(flat, 8) == sample_uniform(16, 8));
}

TEST_CASE("segment mean and median hand cases", "[sampler]") {
  REQUIRE(sample_seg_mse_mean(profile_of({0, 10, 0, 0, 5, 5, 9, 1}), 4) == std::vector<int>{0, 2, 4, 6});
  const MotionProfile flat = profile_of(std::vector<double>(12, 1.0));
  REQUIRE(sample_seg_mse_mean(flat, 4) == std::vector<int>{0, 3, 6, 9});
  REQUIRE(sample_seg_mse_median(flat, 4) == std::vector<int>{0, 3, 6, 9});
  // N = T: every segment has length one.
  REQUIRE(sample_seg_mse_mean(profile_of({3, 1, 2}), 3) == std::vector<int>{0, 1, 2});
  // Median of {1, 2, 9} is 2 -> index 1.
  REQUIRE(sample_seg_mse_median(profile_of({1, 2, 9}), 1) == std::vector<int>{1});
  // Median of {1, 2, 3, 9} is 2.5: 2 and 3 tie, lowest index wins.
  REQUIRE(sample_seg_mse_median(profile_of({1, 2, 3, 9}), 1) == std::vector<int>{1});
  // First N mod T segments are one frame longer: 7 frames, 3 segments -> 3, 2, 2.
  REQUIRE(sample_seg_mse_mean(profile_of({5, 0, 0, 0, 9, 9, 9}), 3) == std::vector<int>{1, 3, 5});
}

TEST_CASE("mixed strategy is deterministic and balanced", "[sampler]") {
  const MotionProfile prof = profile_of({0.3, 0.1, 0.7, 0.2, 0.9, 0.4, 0.5, 0.6, 0.8, 0.0});
  const auto a = sample_mixed(10, 4, prof, 42);
  const auto b = sample_mixed(10, 4, prof, 42);
  REQUIRE(a.chosen == b.chosen);
  REQUIRE(a.indices == b.indices);

  std::map<SamplingStrategy, int> counts;
  for (std::uint64_t seed = 0; seed < 6000; ++seed) ++counts[sample_mixed(10, 4, prof, seed).chosen];
  REQUIRE(counts.size() == 6);
  for (auto [s, c] : counts) {
    INFO(strategy_name(s));
    REQUIRE(std::abs(c - 1000) <= 100);
  }

  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    REQUIRE(sample_mixed(5, 5, profile_of({1, 2, 3, 4, 5}), seed).indices == std::vector<int>{0, 1, 2, 3, 4});
  }
}

TEST_CASE("every strategy returns T distinct ascending in-range indices", "[sampler]") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + static_cast<int>(rng() % 40);
    const int t = 1 + static_cast<int>(rng() % n);
    MotionProfile prof;
    for (int i = 0; i < n; ++i) prof.values.push_back(trial % 3 == 0 ? std::floor(u(rng) * 3) : u(rng));
    for (SamplingStrategy s : {SamplingStrategy::kRandom, SamplingStrategy::kUniform,
                               SamplingStrategy::kUniformRandomStart, SamplingStrategy::kMseSortedUniform,
                               SamplingStrategy::kSegmentMseMean, SamplingStrategy::kSegmentMseMedian,
                               SamplingStrategy::kMixed}) {
      INFO(strategy_name(s) << " N=" << n << " T=" << t);
      check_valid(sample_frames(n, SamplingPlan{s, t, rng()}, &prof), n, t);
    }
  }
}

TEST_CASE("strategy names round-trip", "[sampler]") {
  for (const char* name : {"RandSampl", "UNISampl", "UNIRandStart", "MSESortedUNI", "SegMSEMean", "SegMSEMedian", "Mixed"}) {
    REQUIRE(strategy_name(parse_strategy(name)) == name);
  }
  REQUIRE_THROWS_AS(parse_strategy("Nope"), Error);
}

TEST_CASE("short videos repeat frames cyclically", "[sampler]") {
  const FramePlan p = plan_frames(3, SamplingPlan{SamplingStrategy::kUniform, 8, 0}, nullptr);
  REQUIRE(p.repeated);
  REQUIRE(p.indices == std::vector<int>{0, 1, 2, 0, 1, 2, 0, 1});
  const FramePlan q = plan_frames(16, SamplingPlan{SamplingStrategy::kUniform, 8, 0}, nullptr);
  REQUIRE_FALSE(q.repeated);
  REQUIRE(q.indices == sample_uniform(16, 8));
}
