// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/scma.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "qclip/error.hpp"
#include "qclip/random.hpp"

namespace qclip {

namespace {

constexpr Modality kModalities[] = {Modality::kVisual, Modality::kText};

std::string mod(Modality m) { return std::string(modality_name(m)); }

}  // namespace

std::string_view placement_name(BranchPlacement p) {
  switch (p) {
    case BranchPlacement::kVisualOnly: return "visual";
    case BranchPlacement::kTextOnly: return "text";
    case BranchPlacement::kBoth: return "both";
  }
  return "?";
}

BranchPlacement parse_placement(std::string_view name) {
  for (auto p : {BranchPlacement::kVisualOnly, BranchPlacement::kTextOnly, BranchPlacement::kBoth}) {
    if (placement_name(p) == name) return p;
  }
  fail(ErrorCategory::kConfig, "unknown branch placement '" + std::string(name) + "'");
}

// --- SCMAConfig -----------------------------------------------------------

SCMAConfig SCMAConfig::defaults_for(const BackboneSpec& spec) {
  SCMAConfig c;
  const int depth = std::min(spec.num_visual_layers, spec.num_text_layers);
  const int n = std::min(6, depth);
  for (int k = depth - n; k < depth; ++k) c.adapted_layer_indices.push_back(k);
  c.bottleneck_dim = std::min({c.bottleneck_dim, spec.visual_width, spec.text_width});
  return c;
}

void SCMAConfig::validate(const BackboneSpec& spec) const {
  require(bottleneck_dim >= 1 && bottleneck_dim <= std::min(spec.visual_width, spec.text_width),
          ErrorCategory::kConfig,
          "scma: bottleneck_dim " + std::to_string(bottleneck_dim) + " outside [1, min(d_v, d_t)]");
  std::set<int> seen;
  for (int k : adapted_layer_indices) {
    require(k >= 0 && k < spec.num_visual_layers && k < spec.num_text_layers,
            ErrorCategory::kConfig,
            "scma: adapted layer " + std::to_string(k) + " is not valid for both towers");
    require(seen.insert(k).second, ErrorCategory::kConfig,
            "scma: adapted layer " + std::to_string(k) + " listed twice");
  }
}

bool SCMAConfig::has_branch(Modality m) const {
  if (placement == BranchPlacement::kBoth) return true;
  return (placement == BranchPlacement::kVisualOnly) == (m == Modality::kVisual);
}

nlohmann::json SCMAConfig::to_json() const {
  return {{"adapted_layer_indices", adapted_layer_indices},
          {"bottleneck_dim", bottleneck_dim},
          {"share_across_branches", share_across_branches},
          {"share_across_layers", share_across_layers},
          {"enable_pscma", enable_pscma},
          {"placement", placement_name(placement)}};
}

SCMAConfig SCMAConfig::from_json(const nlohmann::json& j) {
  SCMAConfig c;
  c.adapted_layer_indices = j.at("adapted_layer_indices").get<std::vector<int>>();
  c.bottleneck_dim = j.at("bottleneck_dim");
  c.share_across_branches = j.at("share_across_branches");
  c.share_across_layers = j.at("share_across_layers");
  c.enable_pscma = j.at("enable_pscma");
  c.placement = parse_placement(j.at("placement").get<std::string>());
  return c;
}

// --- AdapterState ---------------------------------------------------------

ParameterPtr AdapterState::make(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                                double stddev, double center, bool decay) {
  ad::Matrix m = ad::Matrix::Constant(rows, cols, center);
  if (stddev > 0.0) {
    Rng rng(derive_seed(seed_, {fnv1a(name)}));
    std::normal_distribution<double> dist(center, stddev);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  }
  auto p = std::make_shared<Parameter>(name, std::move(m), true, decay);
  registry_.push_back(p);
  return p;
}

std::shared_ptr<LinearMap> AdapterState::make_linear(const std::string& name, int in, int out,
                                                     double stddev) {
  auto map = std::make_shared<LinearMap>();
  map->weight = make(name + ".weight", out, in, stddev, 0.0, true);
  map->bias = make(name + ".bias", 1, out, 0.0, 0.0, false);
  return map;
}

AdapterState::AdapterState(const BackboneSpec& spec, SCMAConfig config, std::uint64_t seed)
    : config_(std::move(config)), spec_(spec), seed_(seed) {
  spec_.validate();
  config_.validate(spec_);
  const int r = config_.bottleneck_dim;
  const bool both = config_.placement == BranchPlacement::kBoth;
  const bool branch_shared = both && config_.share_across_branches;
  const bool maps_shared = branch_shared && spec_.visual_width == spec_.text_width;
  const double ffn_std = 1.0 / std::sqrt(static_cast<double>(r));
  // Up maps get small random weights: the zero gate alone keeps the output
  // frozen, and a nonzero Up lets the gate receive gradient from step one.
  const double up_std = 0.02;

  auto make_ffn = [&](const std::string& name, bool two_layer) {
    auto ffn = std::make_shared<BottleneckFfn>();
    ffn->first = *make_linear(name + ".fc1", r, r, ffn_std);
    if (two_layer) ffn->second = *make_linear(name + ".fc2", r, r, ffn_std);
    return ffn;
  };

  // Inter-layer shared bottleneck transforms.
  std::shared_ptr<BottleneckFfn> layer_ffn_shared;
  std::shared_ptr<BottleneckFfn> layer_ffn_per[2];
  if (config_.share_across_layers) {
    if (branch_shared) {
      layer_ffn_shared = make_ffn("scma.ffn", true);
    } else {
      for (auto m : kModalities) {
        if (config_.has_branch(m)) {
          layer_ffn_per[static_cast<int>(m)] = make_ffn("scma." + mod(m) + ".ffn", true);
        }
      }
    }
  }

  for (int k : config_.adapted_layer_indices) {
    const std::string base = "scma.layer" + std::to_string(k);
    Slot slot{k, std::nullopt, std::nullopt};
    std::shared_ptr<LinearMap> down, up;
    if (maps_shared) {
      const int d = spec_.visual_width;
      down = make_linear(base + ".down", d, r, 1.0 / std::sqrt(static_cast<double>(d)));
      up = make_linear(base + ".up", r, d, up_std);
    }
    std::shared_ptr<BottleneckFfn> ffn_here;
    if (!config_.share_across_layers && branch_shared) ffn_here = make_ffn(base + ".ffn", true);

    for (auto m : kModalities) {
      if (!config_.has_branch(m)) continue;
      const int d = spec_.width(m);
      const std::string pre = base + "." + mod(m);
      AdapterBranch b;
      if (maps_shared) {
        b.down = down;
        b.up = up;
      } else {
        b.down = make_linear(pre + ".down", d, r, 1.0 / std::sqrt(static_cast<double>(d)));
        b.up = make_linear(pre + ".up", r, d, up_std);
      }
      if (config_.share_across_layers) {
        b.ffn = branch_shared ? layer_ffn_shared : layer_ffn_per[static_cast<int>(m)];
      } else {
        b.ffn = branch_shared ? ffn_here : make_ffn(pre + ".ffn", true);
      }
      b.norm_gamma = make(pre + ".norm.gamma", 1, d, 0.0, 1.0, false);
      b.norm_beta = make(pre + ".norm.beta", 1, d, 0.0, 0.0, false);
      b.gate = make(pre + ".gate", 1, 1, 0.0, 0.0, false);
      (m == Modality::kVisual ? slot.visual : slot.text) = std::move(b);
    }
    slots_.push_back(std::move(slot));
  }

  if (config_.enable_pscma) {
    const int de = spec_.embed_dim;
    std::shared_ptr<LinearMap> down, up;
    if (maps_shared) {
      const int d = spec_.visual_width;
      down = make_linear("pscma.down", d, r, 1.0 / std::sqrt(static_cast<double>(d)));
      up = make_linear("pscma.up", r, de, up_std);
    }
    std::shared_ptr<BottleneckFfn> ffn = branch_shared ? make_ffn("pscma.ffn", false) : nullptr;
    for (auto m : kModalities) {
      if (!config_.has_branch(m)) continue;
      const int d = spec_.width(m);
      const std::string pre = "pscma." + mod(m);
      AdapterBranch b;
      if (maps_shared) {
        b.down = down;
        b.up = up;
      } else {
        b.down = make_linear(pre + ".down", d, r, 1.0 / std::sqrt(static_cast<double>(d)));
        b.up = make_linear(pre + ".up", r, de, up_std);
      }
      b.ffn = ffn ? ffn : make_ffn(pre + ".ffn", false);
      b.norm_gamma = make(pre + ".norm.gamma", 1, de, 0.0, 1.0, false);
      b.norm_beta = make(pre + ".norm.beta", 1, de, 0.0, 0.0, false);
      b.gate = make(pre + ".gate", 1, 1, 0.0, 0.0, false);
      (m == Modality::kVisual ? pscma_visual_ : pscma_text_) = std::move(b);
    }
  }
}

const AdapterBranch* AdapterState::find_branch(int layer, Modality m) const {
  for (const auto& s : slots_) {
    if (s.layer != layer) continue;
    const auto& b = m == Modality::kVisual ? s.visual : s.text;
    return b ? &*b : nullptr;
  }
  return nullptr;
}

bool AdapterState::adapts(Modality m, int layer) const { return find_branch(layer, m) != nullptr; }

const AdapterBranch& AdapterState::layer_branch(int layer, Modality m) const {
  const AdapterBranch* b = find_branch(layer, m);
  require(b != nullptr, ErrorCategory::kInputContract,
          "scma: layer " + std::to_string(layer) + " of the " + mod(m) +
              " branch carries no adapter");
  return *b;
}

const AdapterBranch& AdapterState::projection_branch(Modality m) const {
  const auto& b = m == Modality::kVisual ? pscma_visual_ : pscma_text_;
  require(b.has_value(), ErrorCategory::kInputContract,
          "scma: P-SCMA is disabled for the " + mod(m) + " branch");
  return *b;
}

ad::Var AdapterState::run_branch(const AdapterBranch& b, const ad::Var& x) {
  require(x.cols() == b.down->weight->data().cols(), ErrorCategory::kInputContract,
          "scma: input width " + std::to_string(x.cols()) + " does not match adapter width " +
              std::to_string(b.down->weight->data().cols()));
  ad::Var h = b.down->apply(x);
  h = b.ffn->first.apply(h);
  if (b.ffn->second) h = b.ffn->second->apply(ad::gelu(h));
  h = b.up->apply(h);
  return ad::layer_norm(h, b.norm_gamma->var(), b.norm_beta->var());
}

ad::Var AdapterState::escma_delta(const ad::Var& x, int layer, Modality m) const {
  return run_branch(layer_branch(layer, m), x);
}

ad::Var AdapterState::apply_escma(const ad::Var& encoder_out, const ad::Var& delta, int layer,
                                  Modality m) const {
  return ad::add(encoder_out, ad::mul_scalar(layer_branch(layer, m).gate->var(), delta));
}

ad::Var AdapterState::pscma_delta(const ad::Var& x, Modality m) const {
  return run_branch(projection_branch(m), x);
}

ad::Var AdapterState::apply_pscma(const ad::Var& projection_out, const ad::Var& delta,
                                  Modality m) const {
  return ad::add(projection_out, ad::mul_scalar(projection_branch(m).gate->var(), delta));
}

ad::Var AdapterState::after_layer(Modality m, int layer, const ad::Var& layer_input,
                                  const ad::Var& layer_output) const {
  if (!adapts(m, layer)) return layer_output;
  return apply_escma(layer_output, escma_delta(layer_input, layer, m), layer, m);
}

ad::Var AdapterState::after_projection(Modality m, const ad::Var& projection_input,
                                       const ad::Var& projection_output) const {
  const auto& b = m == Modality::kVisual ? pscma_visual_ : pscma_text_;
  if (!b) return projection_output;
  return apply_pscma(projection_output, pscma_delta(projection_input, m), m);
}

std::vector<Parameter*> AdapterState::parameters() const {
  std::vector<Parameter*> out;
  out.reserve(registry_.size());
  for (const auto& p : registry_) out.push_back(p.get());
  return out;
}

Eigen::Index AdapterState::param_count() const {
  Eigen::Index n = 0;
  for (const auto& p : registry_) n += p->size();
  return n;
}

// --- parameter budget -----------------------------------------------------

Eigen::Index trainable_param_count(const AdapterState& state, const PromptBank& prompts,
                                   const QualityHead& head) {
  Eigen::Index n = 0;
  for (const Parameter* p : state.parameters()) {
    if (p->trainable()) n += p->size();
  }
  if (prompts.prefix() && prompts.prefix()->trainable()) n += prompts.prefix()->size();
  if (head.weights().trainable()) n += head.weights().size();
  return n;
}

Eigen::Index closed_form_param_count(const BackboneSpec& spec, const SCMAConfig& config,
                                     PromptMode prompt_mode) {
  const Eigen::Index r = config.bottleneck_dim;
  const Eigen::Index n = static_cast<Eigen::Index>(config.adapted_layer_indices.size());
  const Eigen::Index de = spec.embed_dim;
  const Eigen::Index B = config.num_branches();
  const bool branch_shared = B == 2 && config.share_across_branches;
  const bool maps_shared = branch_shared && spec.visual_width == spec.text_width;

  Eigen::Index width_sum = 0;
  for (auto m : kModalities) {
    if (config.has_branch(m)) width_sum += spec.width(m);
  }

  Eigen::Index per_layer;
  if (maps_shared) {
    const Eigen::Index d = spec.visual_width;
    per_layer = 2 * d * r + r + d;
  } else {
    per_layer = 2 * width_sum * r + B * r + width_sum;
  }
  per_layer += 2 * width_sum + B;

  const Eigen::Index ffn_sets =
      (config.share_across_layers ? 1 : n) * (branch_shared ? 1 : B);
  Eigen::Index total = n * per_layer + ffn_sets * (2 * r * r + 2 * r);

  if (config.enable_pscma) {
    if (maps_shared) {
      total += spec.visual_width * r + r + r * de + de;
    } else {
      total += width_sum * r + B * r + B * (r * de + de);
    }
    total += (branch_shared ? 1 : B) * (r * r + r);
    total += 2 * de * B + B;
  }
  if (is_learnable(prompt_mode)) total += kPrefixLength * spec.text_width;
  total += num_levels(prompt_mode);
  return total;
}

}  // namespace qclip
