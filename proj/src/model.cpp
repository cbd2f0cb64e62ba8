// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/model.hpp"

#include "qclip/error.hpp"
#include "qclip/random.hpp"

namespace qclip {

ModelConfig ModelConfig::defaults_for(const BackboneSpec& spec) {
  ModelConfig c;
  c.scma = SCMAConfig::defaults_for(spec);
  return c;
}

nlohmann::json ModelConfig::to_json() const {
  return {{"scma", scma.to_json()},
          {"prompt_mode", prompt_mode_name(prompt_mode)},
          {"softmax_scores", head.softmax_scores},
          {"logit_scale", head.logit_scale},
          {"mos_low", mos_low},
          {"mos_high", mos_high},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.scma = SCMAConfig::from_json(j.at("scma"));
  c.prompt_mode = parse_prompt_mode(j.at("prompt_mode").get<std::string>());
  c.head.softmax_scores = j.at("softmax_scores");
  c.head.logit_scale = j.at("logit_scale");
  c.mos_low = j.at("mos_low");
  c.mos_high = j.at("mos_high");
  c.seed = j.at("seed");
  return c;
}

QClipModel::QClipModel(std::shared_ptr<Backbone> backbone, ModelConfig config)
    : backbone_(std::move(backbone)),
      config_(std::move(config)),
      adapters_(backbone_->spec(), config_.scma, derive_seed(config_.seed, {fnv1a("scma")})),
      prompts_(build_prompt_bank(config_.prompt_mode, *backbone_,
                                 derive_seed(config_.seed, {fnv1a("prompts")}))),
      head_(num_levels(config_.prompt_mode), config_.mos_low, config_.mos_high, config_.head) {}

ad::Var QClipModel::prompt_embeddings(bool adapted) const {
  return embed_prompts(prompts_, *backbone_, adapted ? &adapters_ : nullptr);
}

ad::Var QClipModel::video_embedding(const FrameSequence& frames, bool adapted) const {
  return backbone_->encode_video(frames, adapted ? &adapters_ : nullptr);
}

ad::Var QClipModel::predict_batch(std::span<const FrameSequence> videos, bool adapted) const {
  require(!videos.empty(), ErrorCategory::kInputContract, "predict_batch: empty batch");
  const ad::Var prompts = prompt_embeddings(adapted);
  std::vector<ad::Var> preds;
  preds.reserve(videos.size());
  for (const auto& v : videos) {
    preds.push_back(predict_quality(level_scores(video_embedding(v, adapted), prompts), head_));
  }
  return ad::concat_rows(preds);
}

Prediction QClipModel::predict_with(const FrameSequence& frames, const ad::Var& prompts,
                                    bool adapted) const {
  const ad::Var video = video_embedding(frames, adapted);
  const ad::Var scores = level_scores(video, prompts);
  Prediction p;
  p.quality = predict_quality(scores, head_).scalar();
  p.scores.values.assign(scores.value().data(), scores.value().data() + scores.value().size());
  p.video_embedding = video.value();
  return p;
}

Prediction QClipModel::predict(const FrameSequence& frames, bool adapted) const {
  ad::NoGradGuard no_grad;
  return predict_with(frames, prompt_embeddings(adapted), adapted);
}

std::vector<Prediction> QClipModel::predict_all(std::span<const FrameSequence> videos,
                                                bool adapted) const {
  ad::NoGradGuard no_grad;
  const ad::Var prompts = prompt_embeddings(adapted);
  std::vector<Prediction> out;
  out.reserve(videos.size());
  for (const auto& v : videos) out.push_back(predict_with(v, prompts, adapted));
  return out;
}

std::vector<Parameter*> QClipModel::trainable_parameters() {
  std::vector<Parameter*> out = adapters_.parameters();
  for (Parameter* p : prompts_.parameters()) out.push_back(p);
  for (Parameter* p : head_.parameters()) out.push_back(p);
  return out;
}

std::vector<const Parameter*> QClipModel::trainable_parameters() const {
  auto mut = const_cast<QClipModel*>(this)->trainable_parameters();
  return {mut.begin(), mut.end()};
}

}  // namespace qclip
