// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "qclip/data.hpp"
#include "qclip/error.hpp"
#include "qclip/random.hpp"

namespace fs = std::filesystem;

namespace qclip {

namespace {

struct Scene {
  double freq, angle, speed;       // grating
  double cx, cy, vx, vy, radius;   // disc
  double r, g, b;                  // disc colour
  double tint_r, tint_g, tint_b;   // grating tint
};

Scene draw_scene(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Scene s;
  s.freq = 0.22 + 0.06 * u(rng);
  s.angle = std::numbers::pi * u(rng);
  s.speed = 0.3 + 0.5 * u(rng);
  s.cx = 0.2 + 0.6 * u(rng);
  s.cy = 0.2 + 0.6 * u(rng);
  s.vx = 0.04 * (u(rng) - 0.5);
  s.vy = 0.04 * (u(rng) - 0.5);
  s.radius = 0.15 + 0.15 * u(rng);
  s.r = s.g = s.b = 0.3 + 0.4 * u(rng);
  s.tint_r = s.tint_g = s.tint_b = 1.0;
  return s;
}

// Clean frame t, CV_32FC3 in BGR order.
cv::Mat render(const Scene& s, int t, int size) {
  cv::Mat img(size, size, CV_32FC3);
  const double ca = std::cos(s.angle), sa = std::sin(s.angle);
  const double cx = (s.cx + s.vx * t) * size, cy = (s.cy + s.vy * t) * size;
  const double rad = s.radius * size;
  for (int y = 0; y < size; ++y) {
    auto* row = img.ptr<cv::Vec3f>(y);
    for (int x = 0; x < size; ++x) {
      const double phase = 2.0 * std::numbers::pi * s.freq * (x * ca + y * sa) + s.speed * t;
      const double g = std::sin(phase) > 0.0 ? 0.85 : 0.15;  // square wave keeps hard edges
      double r = g * s.tint_r, gg = g * s.tint_g, b = g * s.tint_b;
      if ((x - cx) * (x - cx) + (y - cy) * (y - cy) <= rad * rad) {
        r = s.r;
        gg = s.g;
        b = s.b;
      }
      row[x] = cv::Vec3f(static_cast<float>(b), static_cast<float>(gg), static_cast<float>(r));
    }
  }
  return img;
}

}  // namespace

DatasetManifest make_synthetic_dataset(const fs::path& out_dir, int n_clips, std::uint64_t seed,
                                       int frames_per_clip, int size) {
  require(n_clips >= 2, ErrorCategory::kInputContract, "make_synthetic_dataset needs at least 2 clips");
  require(frames_per_clip >= 1 && size >= 8, ErrorCategory::kInputContract,
          "make_synthetic_dataset: bad clip geometry");
  std::error_code ec;
  fs::create_directories(out_dir / "clips", ec);
  require(!ec, ErrorCategory::kIo, "cannot create " + (out_dir / "clips").string() + ": " + ec.message());

  DatasetManifest manifest;
  manifest.name = "synthetic";
  manifest.mos_low = 1.0;
  manifest.mos_high = 5.0;
  manifest.base_dir = out_dir;
  for (int i = 0; i < n_clips; ++i) {
    const double level = static_cast<double>(i) / (n_clips - 1);
    Rng scene_rng(derive_seed(seed, {fnv1a("scene"), static_cast<std::uint64_t>(i)}));
    const Scene scene = draw_scene(scene_rng);
    char id[32];
    std::snprintf(id, sizeof(id), "clip_%03d", i);
    const fs::path dir = out_dir / "clips" / id;
    fs::create_directories(dir, ec);
    require(!ec, ErrorCategory::kIo, "cannot create " + dir.string());
    for (int t = 0; t < frames_per_clip; ++t) {
      cv::Mat img = render(scene, t, size);
      // Noise first, then blur: the blur dominates so sharpness falls with level.
      Rng noise_rng(derive_seed(seed, {fnv1a("noise"), static_cast<std::uint64_t>(i),
                                       static_cast<std::uint64_t>(t)}));
      std::normal_distribution<float> noise(0.0f, static_cast<float>(0.08 * level));
      if (level > 0.0) {
        for (int y = 0; y < size; ++y) {
          auto* row = img.ptr<cv::Vec3f>(y);
          for (int x = 0; x < size; ++x) {
            for (int c = 0; c < 3; ++c) row[x][c] += noise(noise_rng);
          }
        }
        cv::GaussianBlur(img, img, cv::Size(0, 0), 0.3 + 2.2 * level, 0.0, cv::BORDER_REFLECT);
      }
      cv::Mat out;
      img.convertTo(out, CV_8UC3, 255.0);
      char name[32];
      std::snprintf(name, sizeof(name), "%04d.png", t);
      const fs::path file = dir / name;
      require(cv::imwrite(file.string(), out), ErrorCategory::kIo, "cannot write " + file.string());
    }
    ManifestRow row;
    row.video_id = id;
    row.path = (fs::path("clips") / id).generic_string();
    row.mos = 5.0 - 4.0 * level;
    manifest.rows.push_back(std::move(row));
  }
  write_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

}  // namespace qclip
