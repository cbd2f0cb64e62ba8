// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/prompt_bank.hpp"

#include "qclip/error.hpp"
#include "qclip/random.hpp"

namespace qclip {

std::string_view level_name(QualityLevel level) {
  switch (level) {
    case QualityLevel::kExcellent: return "excellent";
    case QualityLevel::kGood: return "good";
    case QualityLevel::kFair: return "fair";
    case QualityLevel::kPoor: return "poor";
    case QualityLevel::kBad: return "bad";
  }
  return "?";
}

std::string_view prompt_mode_name(PromptMode mode) {
  switch (mode) {
    case PromptMode::kAntonym: return "antonym";
    case PromptMode::kAntonymLearnable: return "antonym_learnable";
    case PromptMode::kFiveLevel: return "five_level";
    case PromptMode::kFiveLevelLearnable: return "five_level_learnable";
  }
  return "?";
}

PromptMode parse_prompt_mode(std::string_view name) {
  for (auto m : {PromptMode::kAntonym, PromptMode::kAntonymLearnable, PromptMode::kFiveLevel,
                 PromptMode::kFiveLevelLearnable}) {
    if (prompt_mode_name(m) == name) return m;
  }
  fail(ErrorCategory::kConfig, "unknown prompt mode '" + std::string(name) + "'");
}

bool is_learnable(PromptMode mode) {
  return mode == PromptMode::kAntonymLearnable || mode == PromptMode::kFiveLevelLearnable;
}

int num_levels(PromptMode mode) {
  return mode == PromptMode::kAntonym || mode == PromptMode::kAntonymLearnable ? 2 : 5;
}

std::string prompt_template(QualityLevel level) {
  return "a video of " + std::string(level_name(level)) + " quality";
}

std::vector<Parameter*> PromptBank::parameters() {
  if (!prefix_) return {};
  return {prefix_.get()};
}

std::vector<TextInput> PromptBank::token_inputs(const Tokenizer& tokenizer,
                                                int context_length) const {
  std::vector<TextInput> out;
  out.reserve(templates_.size());
  const int placeholder = tokenizer.id("x");
  for (const auto& text : templates_) {
    TextInput in;
    in.token_ids.push_back(tokenizer.sos());
    for (int i = 0; i < prefix_length(); ++i) in.token_ids.push_back(placeholder);
    for (int id : tokenizer.encode_words(text)) in.token_ids.push_back(id);
    in.token_ids.push_back(tokenizer.eos());
    require(static_cast<int>(in.token_ids.size()) <= context_length, ErrorCategory::kInputContract,
            "prompt '" + text + "' needs " + std::to_string(in.token_ids.size()) +
                " tokens, context length is " + std::to_string(context_length));
    if (prefix_) {
      in.prefix = prefix_->var();
      in.prefix_offset = 1;
    }
    out.push_back(std::move(in));
  }
  return out;
}

PromptBank build_prompt_bank(PromptMode mode, const Backbone& backbone, std::uint64_t seed) {
  PromptBank bank;
  bank.mode_ = mode;
  if (num_levels(mode) == 2) {
    bank.levels_ = {QualityLevel::kGood, QualityLevel::kBad};
  } else {
    bank.levels_.assign(kAllLevels.begin(), kAllLevels.end());
  }
  for (auto level : bank.levels_) bank.templates_.push_back(prompt_template(level));

  if (is_learnable(mode)) {
    const ad::Matrix x_row = backbone.token_embedding(backbone.tokenizer().id("x"));
    ad::Matrix init = x_row.replicate(kPrefixLength, 1);
    Rng rng(derive_seed(seed, {fnv1a("prompt.prefix")}));
    std::normal_distribution<double> noise(0.0, 0.02);
    for (Eigen::Index i = 0; i < init.size(); ++i) init.data()[i] += noise(rng);
    bank.prefix_ = std::make_shared<Parameter>("prompt.prefix", std::move(init), true);
  }
  // Fails early when the context cannot hold the prompts.
  (void)bank.token_inputs(backbone.tokenizer(), backbone.spec().context_length);
  return bank;
}

ad::Var embed_prompts(const PromptBank& bank, const Backbone& backbone, const AdapterHooks* hooks) {
  std::vector<ad::Var> rows;
  for (const auto& input : bank.token_inputs(backbone.tokenizer(), backbone.spec().context_length)) {
    rows.push_back(backbone.encode_text(input, hooks));
  }
  return ad::concat_rows(rows);
}

}  // namespace qclip
