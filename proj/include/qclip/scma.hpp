// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Shared cross-modal adapter.
//
// E-SCMA, attached to adapted encoder layer k of a branch with layer input X:
//
//   delta   = LayerNorm(Up_k(FFN(Down_k(X))))
//   X_{k+1} = E_k(X) + gate_k * delta
//
// FFN is linear(r->r), GELU, linear(r->r). With share_across_layers one FFN
// serves every adapted layer; with share_across_branches the visual and
// textual paths use the same FFN, and also the same Down_k/Up_k when both
// towers have equal width. LayerNorm affine parameters and gates are always
// per layer and per branch.
//
// P-SCMA runs the same pipeline at the projection stage with a single
// linear FFN and an Up map into the joint space, as a gated residual added to
// the frozen projection output.
//
// Gates start at zero, so an untrained adapter reproduces the frozen model.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "qclip/backbone.hpp"
#include "qclip/parameter.hpp"
#include "qclip/prompt_bank.hpp"
#include "qclip/quality_head.hpp"

namespace qclip {

enum class BranchPlacement { kVisualOnly, kTextOnly, kBoth };

std::string_view placement_name(BranchPlacement p);
BranchPlacement parse_placement(std::string_view name);

struct SCMAConfig {
  // Absolute layer indices, valid in both towers.
  std::vector<int> adapted_layer_indices;
  int bottleneck_dim = 7;
  bool share_across_branches = true;
  bool share_across_layers = true;
  bool enable_pscma = true;
  BranchPlacement placement = BranchPlacement::kBoth;

  // Last min(6, depth) layers of the shallower tower, everything else default.
  static SCMAConfig defaults_for(const BackboneSpec& spec);

  // Throws kConfig when r is outside [1, min(d_v, d_t)] or an index is
  // invalid for either tower.
  void validate(const BackboneSpec& spec) const;

  bool has_branch(Modality m) const;
  int num_branches() const { return placement == BranchPlacement::kBoth ? 2 : 1; }

  nlohmann::json to_json() const;
  static SCMAConfig from_json(const nlohmann::json& j);
  bool operator==(const SCMAConfig&) const = default;
};

struct LinearMap {
  ParameterPtr weight;  // out x in
  ParameterPtr bias;    // 1 x out
  ad::Var apply(const ad::Var& x) const { return ad::linear(x, weight->var(), bias->var()); }
};

struct BottleneckFfn {
  LinearMap first;
  std::optional<LinearMap> second;  // absent for the single-linear P-SCMA form
};

struct AdapterBranch {
  std::shared_ptr<LinearMap> down;
  std::shared_ptr<LinearMap> up;
  std::shared_ptr<BottleneckFfn> ffn;
  ParameterPtr norm_gamma;
  ParameterPtr norm_beta;
  ParameterPtr gate;  // 1 x 1
};

class AdapterState : public AdapterHooks {
 public:
  AdapterState(const BackboneSpec& spec, SCMAConfig config, std::uint64_t seed);

  const SCMAConfig& config() const { return config_; }
  bool adapts(Modality m, int layer) const;

  // LayerNorm(Up_k(FFN(Down_k(x)))); throws kInputContract if layer k of
  // branch m carries no adapter or the width is wrong.
  ad::Var escma_delta(const ad::Var& x, int layer, Modality m) const;
  // encoder_out + gate_k(m) * delta.
  ad::Var apply_escma(const ad::Var& encoder_out, const ad::Var& delta, int layer, Modality m) const;

  // Throws kInputContract when P-SCMA is disabled for branch m.
  ad::Var pscma_delta(const ad::Var& x, Modality m) const;
  ad::Var apply_pscma(const ad::Var& projection_out, const ad::Var& delta, Modality m) const;

  ad::Var after_layer(Modality m, int layer, const ad::Var& layer_input,
                      const ad::Var& layer_output) const override;
  ad::Var after_projection(Modality m, const ad::Var& projection_input,
                           const ad::Var& projection_output) const override;

  const AdapterBranch& layer_branch(int layer, Modality m) const;
  const AdapterBranch& projection_branch(Modality m) const;

  // Distinct tensors, in creation order.
  std::vector<Parameter*> parameters() const;
  Eigen::Index param_count() const;

 private:
  struct Slot {
    int layer;
    std::optional<AdapterBranch> visual, text;
  };

  ParameterPtr make(const std::string& name, Eigen::Index rows, Eigen::Index cols, double stddev,
                    double center, bool decay);
  std::shared_ptr<LinearMap> make_linear(const std::string& name, int in, int out, double stddev);
  const AdapterBranch* find_branch(int layer, Modality m) const;
  static ad::Var run_branch(const AdapterBranch& b, const ad::Var& x);

  SCMAConfig config_;
  BackboneSpec spec_;
  std::uint64_t seed_;
  std::vector<ParameterPtr> registry_;
  std::vector<Slot> slots_;
  std::optional<AdapterBranch> pscma_visual_, pscma_text_;
};

// Every trainable scalar: adapter tensors, gates, prompt context, head.
Eigen::Index trainable_param_count(const AdapterState& state, const PromptBank& prompts,
                                   const QualityHead& head);

// Closed form of trainable_param_count for the given configuration, with
// n adapted layers, r = bottleneck_dim, B enabled branches of widths d_b and
// joint width d_e:
//
//   per layer   maps:  shared ? 2 d r + r + d : sum_b (2 d_b r + r + d_b)
//               norms: sum_b 2 d_b,  gates: B
//   E-FFN       (2 r^2 + 2 r) x (layers_shared ? 1 : n) x (branch_shared ? 1 : B)
//   P-SCMA      maps:  shared ? d r + r + r d_e + d_e : sum_b (d_b r + r + r d_e + d_e)
//               FFN:   (r^2 + r) x (branch_shared ? 1 : B)
//               norms: 2 d_e B,  gates: B
//   prompts     3 d_t when learnable
//   head        number of levels
//
// "shared" maps require share_across_branches, both branches and d_v = d_t;
// branch_shared requires share_across_branches and both branches.
Eigen::Index closed_form_param_count(const BackboneSpec& spec, const SCMAConfig& config,
                                     PromptMode prompt_mode);

}  // namespace qclip
