// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Fine-tuning of the adapter, prompt context and head against MOS labels.
//
// Loss for a batch of predictions p and labels y:
//
//   (1 - pearson(p, y)) / 2 + lambda * mean_{y_i > y_j} max(0, z_j - z_i)
//
// where z = (p - mean p) / sqrt(var p + 1e-12). A batch of one falls back to
// |p - y|. Optimizer: AdamW with cosine annealing over all steps down to
// lr_floor, no warmup.

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qclip/autodiff.hpp"
#include "qclip/data.hpp"
#include "qclip/evaluation.hpp"
#include "qclip/frame_sampler.hpp"
#include "qclip/model.hpp"

namespace qclip {

struct TrainConfig {
  double learning_rate = 1e-3;
  double lr_floor = 1e-6;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int epochs = 8;
  int batch_size = 12;
  // target_count is the frames-per-video setting and must match the backbone.
  SamplingPlan sampling;
  double rank_weight = 0.5;  // lambda
  int max_steps = 0;         // 0: epochs * batches per epoch
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);
};

ad::Var batch_loss(const ad::Var& preds, std::span<const double> mos, double rank_weight);
double batch_loss(std::span<const double> preds, std::span<const double> mos, double rank_weight);

struct AdamMoments {
  ad::Matrix m, v;
};

struct TrainState {
  long step = 0;
  std::map<std::string, AdamMoments> moments;  // keyed by parameter name
  std::optional<double> best_val_srocc;
  std::map<std::string, ad::Matrix> best_snapshot;
  std::string rng_state;
};

// Cosine-annealed learning rate for update `step` (0-based) of `total`.
double cosine_lr(const TrainConfig& cfg, long step, long total);

// One AdamW update of every trainable parameter from its accumulated gradient.
void adamw_step(std::span<Parameter* const> params, TrainState& state, const TrainConfig& cfg, double lr);

struct AuditReport {
  std::vector<std::string> names;
  std::vector<Eigen::Index> sizes;  // scalar count per name
  Eigen::Index total = 0;
};

// Throws kAudit if any backbone tensor is trainable or the model's trainable
// set contains anything outside the adapter / prompt / head namespaces.
AuditReport assert_only_adapter_trainable(const QClipModel& model);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> val_srocc;
  std::optional<double> val_plcc;
  double lr = 0.0;

  nlohmann::json to_json() const;
};

struct TrainResult {
  std::vector<EpochRecord> log;
  TrainState state;
  std::optional<Metrics> final_val;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Trains `model` in place. Validation uses the configured strategy with a
// per-clip seed that is fixed across epochs.
TrainResult train(QClipModel& model, std::span<const VideoClip> train_set,
                  std::span<const VideoClip> val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// Deterministic evaluation sampling for `clip_index`.
SamplingPlan eval_plan(const SamplingPlan& base, std::uint64_t seed, std::size_t clip_index);

std::vector<double> predict_clips(const QClipModel& model, std::span<const VideoClip> clips,
                                  const SamplingPlan& plan, std::uint64_t seed);

// Copy best_snapshot back into the model's trainable tensors.
void restore_snapshot(QClipModel& model, const std::map<std::string, ad::Matrix>& snapshot);
std::map<std::string, ad::Matrix> snapshot(const QClipModel& model);

using ModelFactory = std::function<std::unique_ptr<QClipModel>(std::uint64_t seed)>;

// Repeated train/test protocol: a fresh model per split, trained on the
// train part and scored on the test part with its final weights.
EvalReport run_split_protocol(std::span<const VideoClip> clips, const ModelFactory& factory,
                              const TrainConfig& cfg, const SplitProtocolOptions& options);

}  // namespace qclip
