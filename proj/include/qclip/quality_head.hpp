// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Quality regression from level similarities: s_k = cos(t_k, V) and
// Q = sum_k w_k s_k.

#pragma once

#include <span>
#include <vector>

#include "qclip/autodiff.hpp"
#include "qclip/parameter.hpp"

namespace qclip {

struct LevelScores {
  std::vector<double> values;  // level order, each in [-1, 1]
};

struct QualityHeadOptions {
  // Off by default: the plain weighted sum of raw similarities is used.
  bool softmax_scores = false;
  double logit_scale = 100.0;
};

class QualityHead {
 public:
  // Weights start at ordinal anchors spread from 1 (best level) to 0 (worst)
  // and mapped onto [mos_low, mos_high].
  QualityHead(int num_levels, double mos_low, double mos_high, QualityHeadOptions options = {});

  int num_levels() const { return static_cast<int>(weights_->data().cols()); }
  Parameter& weights() { return *weights_; }
  const Parameter& weights() const { return *weights_; }
  const QualityHeadOptions& options() const { return options_; }
  std::vector<Parameter*> parameters() { return {weights_.get()}; }

 private:
  ParameterPtr weights_;  // 1 x num_levels
  QualityHeadOptions options_;
};

// video: 1 x d, prompts: n x d -> n x 1 cosine similarities. Throws
// kNumericContract on zero-norm inputs and kInputContract on width mismatch.
ad::Var level_scores(const ad::Var& video, const ad::Var& prompts);
LevelScores level_scores(std::span<const double> video, const std::vector<std::vector<double>>& prompts);

// scores: n x 1 -> 1 x 1.
ad::Var predict_quality(const ad::Var& scores, const QualityHead& head);
double predict_quality(const LevelScores& scores, std::span<const double> weights);

}  // namespace qclip
