// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoints hold only the trainable tensors plus the configuration needed
// to rebuild the model around a separately supplied frozen backbone.

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>

#include <json.hpp>

#include "qclip/model.hpp"

namespace qclip {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointInfo {
  int format_version = kCheckpointVersion;
  ModelConfig model;
  BackboneSpec backbone_spec;
  std::uint64_t backbone_checksum = 0;
  nlohmann::json train_config;
  nlohmann::json metrics;
};

void save_checkpoint(const QClipModel& model, const std::filesystem::path& path,
                     const nlohmann::json& train_config = nlohmann::json::object(),
                     const nlohmann::json& metrics = nlohmann::json::object());

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path);

// Copies the stored tensors into `model`. Throws kCheckpoint with a listing of
// expected vs found shapes when the tensor sets disagree, and on version,
// configuration or backbone mismatch.
void load_checkpoint_into(QClipModel& model, const std::filesystem::path& path);

// Rebuilds the model from the stored configuration, then loads the tensors.
std::unique_ptr<QClipModel> load_checkpoint(const std::filesystem::path& path,
                                            std::shared_ptr<Backbone> backbone);

}  // namespace qclip
