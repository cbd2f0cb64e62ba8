// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qclip/backbone.hpp"
#include "qclip/prompt_bank.hpp"
#include "qclip/quality_head.hpp"
#include "qclip/scma.hpp"

namespace qclip {

struct ModelConfig {
  SCMAConfig scma;
  PromptMode prompt_mode = PromptMode::kFiveLevelLearnable;
  QualityHeadOptions head;
  double mos_low = 1.0;
  double mos_high = 5.0;
  std::uint64_t seed = 0;

  static ModelConfig defaults_for(const BackboneSpec& spec);
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct Prediction {
  double quality = 0.0;
  LevelScores scores;
  ad::Matrix video_embedding;  // 1 x d_e
};

// Frozen backbone plus the trainable adapter, prompt context and head.
class QClipModel {
 public:
  QClipModel(std::shared_ptr<Backbone> backbone, ModelConfig config);

  const ModelConfig& config() const { return config_; }
  Backbone& backbone() { return *backbone_; }
  const Backbone& backbone() const { return *backbone_; }
  const std::shared_ptr<Backbone>& backbone_ptr() const { return backbone_; }
  AdapterState& adapters() { return adapters_; }
  const AdapterState& adapters() const { return adapters_; }
  PromptBank& prompts() { return prompts_; }
  const PromptBank& prompts() const { return prompts_; }
  QualityHead& head() { return head_; }
  const QualityHead& head() const { return head_; }

  // `adapted = false` bypasses every adapter hook (the frozen path).
  ad::Var prompt_embeddings(bool adapted = true) const;
  ad::Var video_embedding(const FrameSequence& frames, bool adapted = true) const;

  // B x 1 predictions; prompt embeddings are computed once per call.
  ad::Var predict_batch(std::span<const FrameSequence> videos, bool adapted = true) const;

  // Gradient-free single prediction.
  Prediction predict(const FrameSequence& frames, bool adapted = true) const;
  std::vector<Prediction> predict_all(std::span<const FrameSequence> videos,
                                      bool adapted = true) const;

  // Adapter tensors, prompt context and head weights (never backbone
  // tensors), in a stable order.
  std::vector<Parameter*> trainable_parameters();
  std::vector<const Parameter*> trainable_parameters() const;

 private:
  Prediction predict_with(const FrameSequence& frames, const ad::Var& prompts, bool adapted) const;

  std::shared_ptr<Backbone> backbone_;
  ModelConfig config_;
  AdapterState adapters_;
  PromptBank prompts_;
  QualityHead head_;
};

}  // namespace qclip
