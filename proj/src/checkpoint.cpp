// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/checkpoint.hpp"

#include <map>
#include <sstream>

#include "qclip/error.hpp"
#include "qclip/tensor_file.hpp"

namespace qclip {

namespace {

std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

CheckpointInfo info_from(const TensorFile& tf, const std::filesystem::path& path) {
  try {
    require(tf.meta.value("kind", "") == "checkpoint", ErrorCategory::kCheckpoint,
            path.string() + " is not a checkpoint");
    CheckpointInfo info;
    info.format_version = tf.meta.at("format_version");
    require(info.format_version == kCheckpointVersion, ErrorCategory::kCheckpoint,
            path.string() + ": checkpoint version " + std::to_string(info.format_version) +
                ", expected " + std::to_string(kCheckpointVersion));
    info.model = ModelConfig::from_json(tf.meta.at("model"));
    info.backbone_spec = BackboneSpec::from_json(tf.meta.at("backbone_spec"));
    info.backbone_checksum = tf.meta.at("backbone_checksum");
    info.train_config = tf.meta.value("train_config", nlohmann::json::object());
    info.metrics = tf.meta.value("metrics", nlohmann::json::object());
    return info;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kCheckpoint, path.string() + ": malformed checkpoint header: " + e.what());
  }
}

}  // namespace

void save_checkpoint(const QClipModel& model, const std::filesystem::path& path,
                     const nlohmann::json& train_config, const nlohmann::json& metrics) {
  nlohmann::json meta{{"kind", "checkpoint"},
                      {"format_version", kCheckpointVersion},
                      {"model", model.config().to_json()},
                      {"backbone_spec", model.backbone().spec().to_json()},
                      {"backbone_checksum", model.backbone().checksum()},
                      {"train_config", train_config},
                      {"metrics", metrics}};
  std::vector<NamedTensor> tensors;
  for (const Parameter* p : model.trainable_parameters()) tensors.push_back({p->name(), p->data()});
  write_tensor_file(path, meta, tensors);
}

CheckpointInfo read_checkpoint_info(const std::filesystem::path& path) {
  return info_from(read_tensor_file(path), path);
}

void load_checkpoint_into(QClipModel& model, const std::filesystem::path& path) {
  const TensorFile tf = read_tensor_file(path);
  const CheckpointInfo info = info_from(tf, path);

  std::map<std::string, std::string> expected, found;
  for (const Parameter* p : model.trainable_parameters()) {
    expected[p->name()] = shape_str(p->data().rows(), p->data().cols());
  }
  for (const auto& t : tf.tensors) found[t.name] = shape_str(t.value.rows(), t.value.cols());
  if (expected != found) {
    std::ostringstream diff;
    diff << path.string() << ": tensor shape mismatch (expected vs found)";
    for (const auto& [name, shape] : expected) {
      auto it = found.find(name);
      if (it == found.end()) diff << "\n  " << name << ": " << shape << " vs missing";
      else if (it->second != shape) diff << "\n  " << name << ": " << shape << " vs " << it->second;
    }
    for (const auto& [name, shape] : found) {
      if (!expected.count(name)) diff << "\n  " << name << ": unexpected vs " << shape;
    }
    fail(ErrorCategory::kCheckpoint, diff.str());
  }
  require(info.model.scma == model.config().scma, ErrorCategory::kCheckpoint,
          path.string() + ": adapter configuration differs: stored " + info.model.scma.to_json().dump() +
              ", model " + model.config().scma.to_json().dump());
  require(info.model.prompt_mode == model.config().prompt_mode, ErrorCategory::kCheckpoint,
          path.string() + ": prompt mode differs");
  require(info.backbone_spec == model.backbone().spec(), ErrorCategory::kCheckpoint,
          path.string() + ": backbone dimensions differ");
  require(info.backbone_checksum == model.backbone().checksum(), ErrorCategory::kCheckpoint,
          path.string() + ": checkpoint was trained against different backbone weights");
  for (Parameter* p : model.trainable_parameters()) p->data() = tf.find(p->name())->value;
}

std::unique_ptr<QClipModel> load_checkpoint(const std::filesystem::path& path,
                                            std::shared_ptr<Backbone> backbone) {
  const CheckpointInfo info = read_checkpoint_info(path);
  auto model = std::make_unique<QClipModel>(std::move(backbone), info.model);
  load_checkpoint_into(*model, path);
  return model;
}

}  // namespace qclip
