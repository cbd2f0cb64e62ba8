// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/quality_head.hpp"

#include "qclip/error.hpp"

namespace qclip {

QualityHead::QualityHead(int num_levels, double mos_low, double mos_high,
                         QualityHeadOptions options)
    : options_(options) {
  require(num_levels >= 2, ErrorCategory::kConfig, "quality head needs at least two levels");
  ad::Matrix w(1, num_levels);
  for (int k = 0; k < num_levels; ++k) {
    const double anchor = 1.0 - static_cast<double>(k) / (num_levels - 1);
    w(0, k) = mos_low + anchor * (mos_high - mos_low);
  }
  weights_ = std::make_shared<Parameter>("head.weights", std::move(w), true);
}

ad::Var level_scores(const ad::Var& video, const ad::Var& prompts) {
  require(video.rows() == 1 && video.cols() == prompts.cols(), ErrorCategory::kInputContract,
          "level_scores: video and prompt embeddings differ in width");
  require(video.value().norm() > 0.0, ErrorCategory::kNumericContract,
          "level_scores: zero-norm video embedding");
  for (Eigen::Index r = 0; r < prompts.rows(); ++r) {
    require(prompts.value().row(r).norm() > 0.0, ErrorCategory::kNumericContract,
            "level_scores: zero-norm prompt embedding");
  }
  return ad::matmul_nt(ad::normalize_rows(prompts), ad::normalize_rows(video));
}

LevelScores level_scores(std::span<const double> video,
                         const std::vector<std::vector<double>>& prompts) {
  ad::Matrix v(1, static_cast<Eigen::Index>(video.size()));
  for (std::size_t i = 0; i < video.size(); ++i) v(0, i) = video[i];
  ad::Matrix t(static_cast<Eigen::Index>(prompts.size()), v.cols());
  for (std::size_t r = 0; r < prompts.size(); ++r) {
    require(prompts[r].size() == video.size(), ErrorCategory::kInputContract,
            "level_scores: video and prompt embeddings differ in width");
    for (std::size_t c = 0; c < video.size(); ++c) t(r, c) = prompts[r][c];
  }
  ad::NoGradGuard no_grad;
  const ad::Var s = level_scores(ad::constant(v), ad::constant(t));
  LevelScores out;
  out.values.assign(s.value().data(), s.value().data() + s.value().size());
  return out;
}

ad::Var predict_quality(const ad::Var& scores, const QualityHead& head) {
  require(scores.cols() == 1 && scores.rows() == head.num_levels(), ErrorCategory::kInputContract,
          "predict_quality: expected one score per level");
  ad::Var s = scores;
  if (head.options().softmax_scores) {
    s = ad::transpose(ad::softmax_rows(ad::scale(ad::transpose(scores), head.options().logit_scale)));
  }
  return ad::matmul(head.weights().var(), s);
}

double predict_quality(const LevelScores& scores, std::span<const double> weights) {
  require(scores.values.size() == weights.size(), ErrorCategory::kInputContract,
          "predict_quality: expected one weight per level");
  double q = 0.0;
  for (std::size_t k = 0; k < weights.size(); ++k) q += weights[k] * scores.values[k];
  return q;
}

}  // namespace qclip
