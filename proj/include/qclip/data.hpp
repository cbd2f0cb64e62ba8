// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Manifests, frame decoding and the decoded-frame cache.
//
// Manifest format (CSV, UTF-8):
//
//   # dataset: <name>
//   # mos_range: <low>,<high>
//   video_id,path,mos[,duration,fps]
//   clip_000,clips/clip_000,4.5
//
// Relative paths resolve against the manifest's directory. A path is either a
// video file or a directory of numbered images (natural filename order).

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qclip/backbone.hpp"
#include "qclip/frame_sampler.hpp"
#include "qclip/frames.hpp"

namespace qclip {

struct ManifestRow {
  std::string video_id;
  std::string path;  // as written in the manifest
  double mos = 0.0;
  std::optional<double> duration;
  std::optional<double> fps;

  bool operator==(const ManifestRow&) const = default;
};

struct DatasetManifest {
  std::string name = "dataset";
  double mos_low = 1.0;
  double mos_high = 5.0;
  std::vector<ManifestRow> rows;
  std::filesystem::path base_dir;  // directory used to resolve relative paths

  // Unique ids, mos inside the declared range, low < high. kInputContract.
  void validate() const;
  std::filesystem::path resolve(const ManifestRow& row) const;

  bool operator==(const DatasetManifest& o) const {
    return name == o.name && mos_low == o.mos_low && mos_high == o.mos_high && rows == o.rows;
  }
};

DatasetManifest read_manifest(const std::filesystem::path& path);
// Doubles are written with round-trip precision.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct DecodeConfig {
  int stride = 1;      // keep every stride-th decoded frame
  int max_frames = 0;  // 0 keeps all
};

// Throws kIngestion naming the file on unreadable or corrupt input.
FrameSequence decode_frames(const std::filesystem::path& path, const DecodeConfig& config = {});

// Bilinear area resize of every frame.
FrameSequence resize_frames(const FrameSequence& frames, int height, int width);

// Largest size with the longest side at most `max_side`, preserving aspect.
FrameSequence limit_resolution(const FrameSequence& frames, int max_side);

struct VideoClip {
  std::string video_id;
  double mos = 0.0;
  FrameSequence frames;   // full decoded rate at the backbone resolution
  MotionProfile profile;  // computed at the working resolution
};

struct LoadOptions {
  DecodeConfig decode;
  std::optional<std::filesystem::path> cache_dir;
  int working_max_side = 224;
};

struct LoadedDataset {
  std::string name;
  double mos_low = 1.0;
  double mos_high = 5.0;
  std::vector<VideoClip> clips;
  std::vector<std::string> skipped;  // "video_id: reason"
};

// Decodes, resizes and profiles every row. Unreadable videos are skipped and
// listed; an empty result throws kInputContract.
LoadedDataset load_dataset(const DatasetManifest& manifest, const BackboneSpec& spec,
                           const LoadOptions& options = {});

// The frames a clip feeds to the backbone under `plan`.
FrameSequence clip_frames(const VideoClip& clip, const SamplingPlan& plan);

// Procedural clips (moving gratings and discs) at graded blur / noise levels.
// Clip i has degradation level i / (n - 1) and MOS 5 - 4 * level. Frames are
// written as PNG directories under out_dir, plus out_dir/manifest.csv.
DatasetManifest make_synthetic_dataset(const std::filesystem::path& out_dir, int n_clips,
                                       std::uint64_t seed, int frames_per_clip = 16,
                                       int size = 32);

// Variance of the 4-neighbour Laplacian of the luma channel, averaged over
// frames; a sharpness proxy.
double laplacian_variance(const FrameSequence& frames);

}  // namespace qclip
