// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Quality-level text prompts "a video of <level> quality", optionally
// preceded by a learnable three-token context shared by every level. The
// context is placed right after the start-of-sequence token and initialized
// from the backbone's embedding of the word "x" plus small noise.

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "qclip/backbone.hpp"
#include "qclip/parameter.hpp"

namespace qclip {

enum class QualityLevel { kExcellent, kGood, kFair, kPoor, kBad };

inline constexpr std::array<QualityLevel, 5> kAllLevels = {
    QualityLevel::kExcellent, QualityLevel::kGood, QualityLevel::kFair, QualityLevel::kPoor,
    QualityLevel::kBad};

std::string_view level_name(QualityLevel level);

enum class PromptMode { kAntonym, kAntonymLearnable, kFiveLevel, kFiveLevelLearnable };

std::string_view prompt_mode_name(PromptMode mode);
PromptMode parse_prompt_mode(std::string_view name);
bool is_learnable(PromptMode mode);
int num_levels(PromptMode mode);

inline constexpr int kPrefixLength = 3;

std::string prompt_template(QualityLevel level);

class PromptBank {
 public:
  const std::vector<QualityLevel>& levels() const { return levels_; }
  const std::vector<std::string>& templates() const { return templates_; }
  PromptMode mode() const { return mode_; }
  bool learnable() const { return prefix_ != nullptr; }
  int prefix_length() const { return learnable() ? kPrefixLength : 0; }

  // Null unless learnable; rows are the three context slots.
  Parameter* prefix() { return prefix_.get(); }
  const Parameter* prefix() const { return prefix_.get(); }
  std::vector<Parameter*> parameters();

  // Token sequences in level order: <sos> [x x x] a video of <level> quality <eos>.
  // Throws kInputContract if a sequence exceeds the context length.
  std::vector<TextInput> token_inputs(const Tokenizer& tokenizer, int context_length) const;

 private:
  friend PromptBank build_prompt_bank(PromptMode mode, const Backbone& backbone,
                                      std::uint64_t seed);
  PromptMode mode_ = PromptMode::kFiveLevelLearnable;
  std::vector<QualityLevel> levels_;
  std::vector<std::string> templates_;
  ParameterPtr prefix_;
};

PromptBank build_prompt_bank(PromptMode mode, const Backbone& backbone, std::uint64_t seed);

// One joint-space row per prompt, in level order (n_levels x embed_dim).
ad::Var embed_prompts(const PromptBank& bank, const Backbone& backbone, const AdapterHooks* hooks);

}  // namespace qclip
