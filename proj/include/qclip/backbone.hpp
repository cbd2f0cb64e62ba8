// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Frozen two-tower (visual / textual) transformer encoder with hook points.
//
// Visual tower: each frame is cut into non-overlapping patches, embedded,
// run through pre-LN transformer layers, mean-pooled over tokens and
// normalized. The per-frame vectors are mean-pooled over time into a single
// projection input, which is then projected into the joint space.
//
// Text tower: token embeddings plus learned positions through causally
// masked pre-LN transformer layers; the last token is normalized and
// projected.
//
// AdapterHooks sees the input and output of every layer and the projection
// input/output of each tower; without hooks the native frozen output is
// returned.

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "qclip/autodiff.hpp"
#include "qclip/frames.hpp"
#include "qclip/parameter.hpp"

namespace qclip {

enum class Modality { kVisual, kText };
std::string_view modality_name(Modality m);

struct BackboneSpec {
  int num_visual_layers = 4;
  int num_text_layers = 4;
  int visual_width = 32;
  int text_width = 32;
  int embed_dim = 32;
  int frame_height = 32;
  int frame_width = 32;
  int context_length = 16;

  // Architecture of this binding.
  int patch_size = 8;
  int num_heads = 2;
  int mlp_ratio = 4;
  int vocab_size = 64;
  int num_frames = 8;

  // Throws kConfig on non-positive or inconsistent dimensions.
  void validate() const;
  int width(Modality m) const { return m == Modality::kVisual ? visual_width : text_width; }
  int num_layers(Modality m) const {
    return m == Modality::kVisual ? num_visual_layers : num_text_layers;
  }
  int num_patches() const { return (frame_height / patch_size) * (frame_width / patch_size); }

  // Desk-scale stand-in.
  static BackboneSpec tiny();
  // Dimensions of the large video-tuned CLIP variant (ViT-L/14 class,
  // 24 + 24 layers, width 1024, joint space 1024, 336 px).
  static BackboneSpec pe_core_l();

  nlohmann::json to_json() const;
  static BackboneSpec from_json(const nlohmann::json& j);
  bool operator==(const BackboneSpec&) const = default;
};

struct PixelNormalization {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.25, 0.25, 0.25};
};

struct LayerActivations {
  Modality modality;
  int layer;
  ad::Matrix tokens;  // layer input V_k or T_k
};

class AdapterHooks {
 public:
  virtual ~AdapterHooks() = default;
  // Returns the input to layer `layer + 1` given the frozen layer's input
  // and output.
  virtual ad::Var after_layer(Modality m, int layer, const ad::Var& layer_input,
                              const ad::Var& layer_output) const = 0;
  // Returns the joint-space embedding given the projection input and the
  // frozen projection output.
  virtual ad::Var after_projection(Modality m, const ad::Var& projection_input,
                                   const ad::Var& projection_output) const = 0;
};

// Word-level vocabulary. Unknown words map to <unk>.
class Tokenizer {
 public:
  explicit Tokenizer(std::vector<std::string> vocab);

  int sos() const { return sos_; }
  int eos() const { return eos_; }
  int unk() const { return unk_; }
  int id(std::string_view word) const;
  std::vector<int> encode_words(std::string_view text) const;
  const std::vector<std::string>& vocab() const { return vocab_; }
  int size() const { return static_cast<int>(vocab_.size()); }

  static Tokenizer default_vocab();

 private:
  std::vector<std::string> vocab_;
  std::unordered_map<std::string, int> index_;
  int sos_ = 0, eos_ = 0, unk_ = 0;
};

struct TextInput {
  std::vector<int> token_ids;
  // When valid, rows of `prefix` replace the token embeddings starting at
  // `prefix_offset`.
  ad::Var prefix;
  int prefix_offset = 1;
};

class Backbone {
 public:
  Backbone(BackboneSpec spec, Tokenizer tokenizer, PixelNormalization norm);

  const BackboneSpec& spec() const { return spec_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  const PixelNormalization& pixel_normalization() const { return norm_; }

  // frames: exactly spec().num_frames frames at the backbone resolution with
  // values in [0, 1]. Returns 1 x embed_dim.
  ad::Var encode_video(const FrameSequence& frames, const AdapterHooks* hooks,
                       std::vector<LayerActivations>* trace = nullptr) const;
  // Returns 1 x embed_dim.
  ad::Var encode_text(const TextInput& input, const AdapterHooks* hooks,
                      std::vector<LayerActivations>* trace = nullptr) const;

  // Frozen row of the token embedding table.
  ad::Matrix token_embedding(int token_id) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find(std::string_view name);

  // FNV-1a over parameter names and raw values.
  std::uint64_t checksum() const;

  // Fill every tensor with deterministic random values.
  void randomize(std::uint64_t seed);

  // Persist / restore weights in the tensor container (kind "backbone").
  void save(const std::filesystem::path& path) const;

 private:
  struct Layer {
    ParameterPtr ln1_gamma, ln1_beta, qkv_weight, qkv_bias, out_weight, out_bias;
    ParameterPtr ln2_gamma, ln2_beta, fc1_weight, fc1_bias, fc2_weight, fc2_bias;
  };
  struct Tower {
    std::vector<Layer> layers;
    ParameterPtr post_gamma, post_beta, projection;
  };

  ParameterPtr add(const std::string& name, Eigen::Index rows, Eigen::Index cols);
  void build_tower(Tower& tower, const std::string& prefix, int width, int layers);
  ad::Var run_layer(const Layer& layer, const ad::Var& x, int width, bool causal) const;
  ad::Var run_tower(const Tower& tower, Modality m, ad::Var x, bool causal,
                    const AdapterHooks* hooks, std::vector<LayerActivations>* trace) const;
  ad::Matrix frame_patches(const Frame& frame) const;

  BackboneSpec spec_;
  Tokenizer tokenizer_;
  PixelNormalization norm_;
  std::vector<ParameterPtr> params_;
  Tower visual_, text_;
  ParameterPtr patch_weight_, patch_bias_, visual_pos_;
  ParameterPtr token_table_, text_pos_;
};

// Frozen deterministic encoder pair; same (seed, spec) -> identical weights.
std::shared_ptr<Backbone> make_tiny_backbone(std::uint64_t seed, const BackboneSpec& spec);

// Loads a pretrained binding written by Backbone::save (or converted into the
// same container). Shapes are validated against the stored spec.
std::shared_ptr<Backbone> load_backbone(const std::filesystem::path& path);

}  // namespace qclip
