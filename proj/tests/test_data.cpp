// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <fstream>
#include <random>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/videoio.hpp>

#include "qclip/checkpoint.hpp"
#include "qclip/config.hpp"
#include "qclip/data.hpp"
#include "qclip/error.hpp"
#include "qclip/training.hpp"
#include "test_support.hpp"

using namespace qclip;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ErrorCategory category_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.category();
  }
  FAIL("no qclip::Error thrown");
  return ErrorCategory::kIo;
}

bool same_frames(const FrameSequence& a, const FrameSequence& b) {
  if (a.count() != b.count()) return false;
  for (int i = 0; i < a.count(); ++i) {
    if (a.frames[i].pixels != b.frames[i].pixels) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("manifest round-trip", "[data]") {
  const fs::path dir = testing::scratch_dir("manifest");
  DatasetManifest m;
  m.name = "demo set";
  m.mos_low = 0.0;
  m.mos_high = 100.0;
  m.rows.push_back({"a", "clips/a.mp4", 71.25, 8.0, 30.0});
  m.rows.push_back({"b,quoted", "clips/b dir", 0.1 + 0.2, std::nullopt, std::nullopt});
  write_manifest(m, dir / "m.csv");
  const DatasetManifest back = read_manifest(dir / "m.csv");
  REQUIRE(back == m);
  REQUIRE(back.resolve(back.rows[0]) == dir / "clips/a.mp4");

  std::ofstream(dir / "dup.csv") << "video_id,path,mos\nx,p,3\nx,q,4\n";
  REQUIRE(category_of([&] { read_manifest(dir / "dup.csv"); }) == ErrorCategory::kInputContract);
  std::ofstream(dir / "range.csv") << "# mos_range: 1,5\nvideo_id,path,mos\nx,p,7\n";
  REQUIRE(category_of([&] { read_manifest(dir / "range.csv"); }) == ErrorCategory::kInputContract);
  REQUIRE(category_of([&] { read_manifest(dir / "missing.csv"); }) == ErrorCategory::kIo);
}

TEST_CASE("image directories decode in natural order", "[data]") {
  const fs::path dir = testing::scratch_dir("frames");
  for (int i = 0; i < 16; ++i) {
    // Frame i is a flat gray of value 10 i; unpadded names test natural order.
    cv::Mat img(6, 5, CV_8UC3, cv::Scalar(10 * i, 10 * i, 10 * i));
    REQUIRE(cv::imwrite((dir / (std::to_string(i) + ".png")).string(), img));
  }
  const FrameSequence s = decode_frames(dir);
  REQUIRE(s.count() == 16);
  REQUIRE(s.height() == 6);
  REQUIRE(s.width() == 5);
  for (int i = 0; i < 16; ++i) REQUIRE(s.frames[i].at(2, 2, 1) == Approx(10.0 * i / 255.0));
  REQUIRE(same_frames(s, decode_frames(dir)));

  const FrameSequence strided = decode_frames(dir, DecodeConfig{3, 4});
  REQUIRE(strided.original_indices == std::vector<int>{0, 3, 6, 9});
  REQUIRE(strided.frames[1].at(0, 0, 0) == Approx(30.0 / 255.0));
}

TEST_CASE("corrupt and truncated inputs raise ingestion errors", "[data]") {
  const fs::path dir = testing::scratch_dir("corrupt");
  std::ofstream(dir / "junk.avi", std::ios::binary) << "definitely not a video";
  REQUIRE(category_of([&] { decode_frames(dir / "junk.avi"); }) == ErrorCategory::kIngestion);
  REQUIRE(category_of([&] { decode_frames(dir / "absent.mp4"); }) == ErrorCategory::kIngestion);

  const fs::path video = dir / "clip.avi";
  {
    cv::VideoWriter w(video.string(), cv::VideoWriter::fourcc('M', 'J', 'P', 'G'), 10.0, cv::Size(32, 32));
    REQUIRE(w.isOpened());
    std::mt19937 rng(1);
    for (int i = 0; i < 40; ++i) {
      cv::Mat img(32, 32, CV_8UC3);
      cv::randu(img, 0, 255);
      w.write(img);
    }
  }
  const FrameSequence full = decode_frames(video);
  REQUIRE(full.count() == 40);

  const std::string bytes = slurp(video);
  std::ofstream(dir / "cut.avi", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  REQUIRE(category_of([&] { decode_frames(dir / "cut.avi"); }) == ErrorCategory::kIngestion);
}

TEST_CASE("synthetic dataset is deterministic and graded", "[data][synthetic]") {
  const fs::path a = testing::scratch_dir("synth_a"), b = testing::scratch_dir("synth_b");
  const DatasetManifest ma = make_synthetic_dataset(a, 6, 4);
  make_synthetic_dataset(b, 6, 4);
  REQUIRE(slurp(a / "manifest.csv") == slurp(b / "manifest.csv"));
  REQUIRE(slurp(a / "clips/clip_003/0005.png") == slurp(b / "clips/clip_003/0005.png"));
  for (std::size_t i = 1; i < ma.rows.size(); ++i) REQUIRE(ma.rows[i].mos < ma.rows[i - 1].mos);
  REQUIRE(ma.rows.front().mos == 5.0);
  REQUIRE(ma.rows.back().mos == 1.0);

  const FrameSequence clean = decode_frames(a / "clips/clip_000");
  const FrameSequence worst = decode_frames(a / "clips/clip_005");
  REQUIRE(clean.count() == 16);
  REQUIRE(laplacian_variance(clean) > laplacian_variance(worst));
}

TEST_CASE("dataset loading resizes, profiles and caches", "[data]") {
  const fs::path dir = testing::scratch_dir("load");
  const DatasetManifest m = make_synthetic_dataset(dir / "set", 4, 1, 10, 48);
  BackboneSpec spec = testing::small_spec();
  LoadOptions opts;
  opts.cache_dir = dir / "cache";
  const LoadedDataset first = load_dataset(m, spec, opts);
  REQUIRE(first.clips.size() == 4);
  REQUIRE(first.clips[0].frames.height() == spec.frame_height);
  REQUIRE(first.clips[0].frames.count() == 10);
  REQUIRE(first.clips[0].profile.values.size() == 10);
  REQUIRE(std::distance(fs::directory_iterator(dir / "cache"), fs::directory_iterator{}) == 4);

  const LoadedDataset second = load_dataset(m, spec, opts);
  for (std::size_t i = 0; i < 4; ++i) {
    REQUIRE(same_frames(first.clips[i].frames, second.clips[i].frames));
    REQUIRE(first.clips[i].profile.values == second.clips[i].profile.values);
  }
  REQUIRE(same_frames(load_dataset(m, spec).clips[2].frames, first.clips[2].frames));

  DatasetManifest broken = m;
  broken.rows.push_back({"ghost", "clips/ghost", 3.0});
  const LoadedDataset partial = load_dataset(broken, spec);
  REQUIRE(partial.clips.size() == 4);
  REQUIRE(partial.skipped.size() == 1);

  const FrameSequence picked = clip_frames(first.clips[0], SamplingPlan{SamplingStrategy::kUniform, 4, 0});
  REQUIRE(picked.original_indices == std::vector<int>{1, 3, 6, 8});
}

TEST_CASE("checkpoint round-trip reproduces predictions", "[checkpoint]") {
  const fs::path dir = testing::scratch_dir("ckpt");
  const BackboneSpec spec = BackboneSpec::tiny();
  const auto backbone = make_tiny_backbone(0, spec);
  QClipModel model(backbone, ModelConfig::defaults_for(spec));
  std::mt19937_64 rng(2);
  for (Parameter* p : model.trainable_parameters()) {
    std::normal_distribution<double> n(0.0, 0.3);
    for (Eigen::Index i = 0; i < p->size(); ++i) p->data().data()[i] += n(rng);
  }
  std::vector<FrameSequence> probe;
  for (int i = 0; i < 4; ++i) probe.push_back(testing::random_frames(rng, spec));
  const auto before = model.predict_all(probe);

  save_checkpoint(model, dir / "m.qclip", TrainConfig{}.to_json(), {{"srocc", 0.5}});
  REQUIRE(fs::file_size(dir / "m.qclip") < 5u * 1024 * 1024);
  const auto loaded = load_checkpoint(dir / "m.qclip", backbone);
  const auto after = loaded->predict_all(probe);
  for (std::size_t i = 0; i < probe.size(); ++i) REQUIRE(std::abs(after[i].quality - before[i].quality) <= 1e-6);

  const CheckpointInfo info = read_checkpoint_info(dir / "m.qclip");
  REQUIRE(info.format_version == kCheckpointVersion);
  REQUIRE(info.backbone_checksum == backbone->checksum());
  REQUIRE(info.metrics["srocc"] == 0.5);

  ModelConfig other = ModelConfig::defaults_for(spec);
  other.scma.bottleneck_dim = 4;
  QClipModel mismatched(backbone, other);
  try {
    load_checkpoint_into(mismatched, dir / "m.qclip");
    FAIL("mismatched adapter configuration loaded");
  } catch (const Error& e) {
    REQUIRE(e.category() == ErrorCategory::kCheckpoint);
    const std::string msg = e.what();
    REQUIRE(msg.find("expected") != std::string::npos);
    REQUIRE(msg.find("found") != std::string::npos);
    REQUIRE(msg.find("1x7") != std::string::npos);
  }

  REQUIRE(category_of([&] { load_checkpoint(dir / "m.qclip", make_tiny_backbone(1, spec)); }) ==
          ErrorCategory::kCheckpoint);
  std::ofstream(dir / "bad.qclip", std::ios::binary) << "nope";
  REQUIRE(category_of([&] { load_checkpoint(dir / "bad.qclip", backbone); }) == ErrorCategory::kCheckpoint);
}

TEST_CASE("run config parsing", "[config]") {
  const RunConfig c = parse_run_config(
      "# toy run\n"
      "backbone.seed = 5\n"
      "scma.bottleneck_dim = 4\n"
      "scma.layers = 2,3\n"
      "scma.placement = visual\n"
      "prompt.mode = antonym\n"
      "train.learning_rate = 0.02   # override\n"
      "train.sampling_strategy = Mixed\n"
      "data.manifest = set/manifest.csv\n"
      "eval.seeds = 4,5\n",
      "/base");
  REQUIRE(c.backbone_seed == 5);
  REQUIRE(c.model.scma.bottleneck_dim == 4);
  REQUIRE(c.model.scma.adapted_layer_indices == std::vector<int>{2, 3});
  REQUIRE(c.model.scma.placement == BranchPlacement::kVisualOnly);
  REQUIRE(c.model.prompt_mode == PromptMode::kAntonym);
  REQUIRE(c.train.learning_rate == 0.02);
  REQUIRE(c.train.sampling.strategy == SamplingStrategy::kMixed);
  REQUIRE(c.train.sampling.target_count == c.backbone_spec.num_frames);
  REQUIRE(c.manifest == fs::path("/base/set/manifest.csv"));
  REQUIRE(c.protocol.seeds == std::vector<std::uint64_t>{4, 5});

  REQUIRE(category_of([] { parse_run_config("train.learning_rat = 1\n"); }) == ErrorCategory::kConfig);
  REQUIRE(category_of([] { parse_run_config("train.epochs = many\n"); }) == ErrorCategory::kConfig);
  REQUIRE(category_of([] { parse_run_config("no equals sign\n"); }) == ErrorCategory::kConfig);
  REQUIRE(category_of([] { parse_run_config("scma.bottleneck_dim = 99\n"); }) == ErrorCategory::kConfig);
}
