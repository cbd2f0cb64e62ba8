// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "qclip/error.hpp"

namespace fs = std::filesystem;

namespace qclip {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& v) {
  T out{};
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  require(res.ec == std::errc() && res.ptr == v.data() + v.size() && !v.empty(), ErrorCategory::kConfig,
          "config: " + key + " = '" + v + "' is not a valid number");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(ErrorCategory::kConfig, "config: " + key + " = '" + v + "' is not a boolean");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_number<T>(key, item));
  }
  return out;
}

fs::path resolve(const std::string& v, const fs::path& base) {
  const fs::path p(v);
  return p.is_absolute() || base.empty() ? p : base / p;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& v, const fs::path& base) {
  auto& bs = backbone_spec;
  auto& tc = train;
  auto as_int = [&] { return parse_number<int>(key, v); };
  auto as_double = [&] { return parse_number<double>(key, v); };
  auto as_u64 = [&] { return parse_number<std::uint64_t>(key, v); };

  try {
    if (key == "backbone.kind") {
      require(v == "tiny" || v == "file", ErrorCategory::kConfig, "config: backbone.kind must be tiny or file");
      backbone_kind = v;
    } else if (key == "backbone.checkpoint_path") backbone_path = resolve(v, base);
    else if (key == "backbone.seed") backbone_seed = as_u64();
    else if (key == "backbone.visual_layers") bs.num_visual_layers = as_int();
    else if (key == "backbone.text_layers") bs.num_text_layers = as_int();
    else if (key == "backbone.visual_width") bs.visual_width = as_int();
    else if (key == "backbone.text_width") bs.text_width = as_int();
    else if (key == "backbone.embed_dim") bs.embed_dim = as_int();
    else if (key == "backbone.frame_size") bs.frame_height = bs.frame_width = as_int();
    else if (key == "backbone.patch_size") bs.patch_size = as_int();
    else if (key == "backbone.num_heads") bs.num_heads = as_int();
    else if (key == "backbone.num_frames") bs.num_frames = as_int();
    else if (key == "backbone.context_length") bs.context_length = as_int();
    else if (key == "scma.layers") model.scma.adapted_layer_indices = parse_list<int>(key, v);
    else if (key == "scma.bottleneck_dim") model.scma.bottleneck_dim = as_int();
    else if (key == "scma.share_across_branches") model.scma.share_across_branches = parse_bool(key, v);
    else if (key == "scma.share_across_layers") model.scma.share_across_layers = parse_bool(key, v);
    else if (key == "scma.enable_pscma") model.scma.enable_pscma = parse_bool(key, v);
    else if (key == "scma.placement") model.scma.placement = parse_placement(v);
    else if (key == "prompt.mode") model.prompt_mode = parse_prompt_mode(v);
    else if (key == "head.softmax_scores") model.head.softmax_scores = parse_bool(key, v);
    else if (key == "head.logit_scale") model.head.logit_scale = as_double();
    else if (key == "model.seed") model.seed = as_u64();
    else if (key == "train.learning_rate") tc.learning_rate = as_double();
    else if (key == "train.lr_floor") tc.lr_floor = as_double();
    else if (key == "train.weight_decay") tc.weight_decay = as_double();
    else if (key == "train.beta1") tc.beta1 = as_double();
    else if (key == "train.beta2") tc.beta2 = as_double();
    else if (key == "train.adam_eps") tc.adam_eps = as_double();
    else if (key == "train.epochs") tc.epochs = as_int();
    else if (key == "train.batch_size") tc.batch_size = as_int();
    else if (key == "train.frames_per_video") tc.sampling.target_count = as_int();
    else if (key == "train.sampling_strategy") tc.sampling.strategy = parse_strategy(v);
    else if (key == "train.rank_weight") tc.rank_weight = as_double();
    else if (key == "train.max_steps") tc.max_steps = as_int();
    else if (key == "train.seed") tc.seed = as_u64();
    else if (key == "data.manifest") manifest = resolve(v, base);
    else if (key == "data.val_manifest") val_manifest = resolve(v, base);
    else if (key == "data.val_fraction") val_fraction = as_double();
    else if (key == "data.cache_dir") load.cache_dir = resolve(v, base);
    else if (key == "data.stride") load.decode.stride = as_int();
    else if (key == "data.working_max_side") load.working_max_side = as_int();
    else if (key == "output.dir") output_dir = resolve(v, base);
    else if (key == "eval.num_splits") protocol.num_splits = as_int();
    else if (key == "eval.train_fraction") protocol.train_fraction = as_double();
    else if (key == "eval.seeds") protocol.seeds = parse_list<std::uint64_t>(key, v);
    else if (key == "eval.logistic_mapping") protocol.eval.logistic_mapping = parse_bool(key, v);
    else fail(ErrorCategory::kConfig, "config: unknown key '" + key + "'");
  } catch (const Error& e) {
    if (e.category() == ErrorCategory::kConfig) throw;
    fail(ErrorCategory::kConfig, "config: " + key + ": " + e.what());
  }
  if (key == "train.frames_per_video") frames_per_video_set = true;
}

void RunConfig::finalize() {
  if (backbone_kind == "tiny") {
    backbone_spec.validate();
    // File backbones are checked once their spec is known, at model build.
    SCMAConfig scma = model.scma;
    if (scma.adapted_layer_indices.empty()) {
      scma.adapted_layer_indices = SCMAConfig::defaults_for(backbone_spec).adapted_layer_indices;
    }
    scma.validate(backbone_spec);
  }
  if (!frames_per_video_set) train.sampling.target_count = backbone_spec.num_frames;
  train.sampling.seed = train.seed;
  train.validate();
  require(val_fraction >= 0.0 && val_fraction < 1.0, ErrorCategory::kConfig,
          "config: data.val_fraction must lie in [0, 1)");
  require(protocol.num_splits >= 1, ErrorCategory::kConfig, "config: eval.num_splits must be >= 1");
  require(protocol.train_fraction > 0.0 && protocol.train_fraction < 1.0, ErrorCategory::kConfig,
          "config: eval.train_fraction must lie in (0, 1)");
  require(backbone_kind == "tiny" || !backbone_path.empty(), ErrorCategory::kConfig,
          "config: backbone.kind = file needs backbone.checkpoint_path");
}

RunConfig parse_run_config(const std::string& text, const fs::path& base_dir) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCategory::kConfig,
            "config line " + std::to_string(line_no) + ": expected key = value");
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)), base_dir);
  }
  cfg.finalize();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCategory::kIo, "cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

std::shared_ptr<Backbone> make_backbone(const RunConfig& config) {
  if (config.backbone_kind == "file") return load_backbone(config.backbone_path);
  return make_tiny_backbone(config.backbone_seed, config.backbone_spec);
}

}  // namespace qclip
