// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat "key = value" run configuration. '#' starts a comment; unknown keys
// are errors. Relative paths resolve against the config file's directory.
//
//   backbone.kind            tiny | file
//   backbone.checkpoint_path path of a saved backbone (kind = file)
//   backbone.seed            weights seed for kind = tiny
//   backbone.visual_layers, backbone.text_layers, backbone.visual_width,
//   backbone.text_width, backbone.embed_dim, backbone.frame_size,
//   backbone.patch_size, backbone.num_heads, backbone.num_frames,
//   backbone.context_length  tiny-backbone dimensions
//   scma.layers              comma-separated adapted layer indices
//   scma.bottleneck_dim, scma.share_across_branches, scma.share_across_layers,
//   scma.enable_pscma, scma.placement (visual | text | both)
//   prompt.mode              antonym | antonym_learnable | five_level |
//                            five_level_learnable
//   head.softmax_scores, head.logit_scale
//   model.seed
//   train.learning_rate, train.lr_floor, train.weight_decay, train.beta1,
//   train.beta2, train.adam_eps, train.epochs, train.batch_size,
//   train.frames_per_video, train.sampling_strategy, train.rank_weight,
//   train.max_steps, train.seed
//   data.manifest, data.val_manifest, data.val_fraction, data.cache_dir,
//   data.stride, data.working_max_side
//   output.dir
//   eval.num_splits, eval.train_fraction, eval.seeds, eval.logistic_mapping

#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "qclip/backbone.hpp"
#include "qclip/data.hpp"
#include "qclip/evaluation.hpp"
#include "qclip/model.hpp"
#include "qclip/training.hpp"

namespace qclip {

struct RunConfig {
  std::string backbone_kind = "tiny";
  std::filesystem::path backbone_path;
  std::uint64_t backbone_seed = 0;
  BackboneSpec backbone_spec = BackboneSpec::tiny();

  ModelConfig model;  // empty scma.adapted_layer_indices means defaults
  TrainConfig train;

  std::filesystem::path manifest;
  std::filesystem::path val_manifest;
  double val_fraction = 0.0;  // held out from manifest when val_manifest is empty
  LoadOptions load;
  std::filesystem::path output_dir = "run";
  SplitProtocolOptions protocol;
  // train.frames_per_video given explicitly; otherwise it follows the backbone.
  bool frames_per_video_set = false;

  // Sets one key; throws kConfig on unknown keys or unparsable values.
  void set(const std::string& key, const std::string& value,
           const std::filesystem::path& base_dir = {});
  // Fills defaults that depend on other keys and validates.
  void finalize();
};

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

std::shared_ptr<Backbone> make_backbone(const RunConfig& config);

}  // namespace qclip
