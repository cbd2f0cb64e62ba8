// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "qclip/error.hpp"
#include "qclip/model.hpp"
#include "qclip/prompt_bank.hpp"
#include "qclip/quality_head.hpp"
#include "qclip/training.hpp"
#include "test_support.hpp"

using namespace qclip;
using Catch::Approx;

namespace {

ad::Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  ad::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

ad::Matrix row(std::initializer_list<double> v) {
  ad::Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

}  // namespace

TEST_CASE("prompt templates", "[prompt]") {
  const auto backbone = make_tiny_backbone(1, testing::small_spec());
  const PromptBank five = build_prompt_bank(PromptMode::kFiveLevel, *backbone, 0);
  REQUIRE(five.templates() == std::vector<std::string>{"a video of excellent quality", "a video of good quality",
                                                       "a video of fair quality", "a video of poor quality",
                                                       "a video of bad quality"});
  REQUIRE_FALSE(five.learnable());
  const PromptBank anto = build_prompt_bank(PromptMode::kAntonym, *backbone, 0);
  REQUIRE(anto.templates() == std::vector<std::string>{"a video of good quality", "a video of bad quality"});
  REQUIRE(anto.levels() == std::vector<QualityLevel>{QualityLevel::kGood, QualityLevel::kBad});
  REQUIRE(build_prompt_bank(PromptMode::kAntonymLearnable, *backbone, 0).prefix_length() == 3);
  REQUIRE_THROWS_AS(parse_prompt_mode("six_level"), Error);
  for (auto m : {PromptMode::kAntonym, PromptMode::kAntonymLearnable, PromptMode::kFiveLevel,
                 PromptMode::kFiveLevelLearnable}) {
    REQUIRE(parse_prompt_mode(prompt_mode_name(m)) == m);
  }
}

TEST_CASE("learnable prompts place three context slots after start of sequence", "[prompt]") {
  const auto backbone = make_tiny_backbone(1, testing::small_spec());
  const PromptBank bank = build_prompt_bank(PromptMode::kFiveLevelLearnable, *backbone, 0);
  REQUIRE(bank.prefix()->data().rows() == 3);
  REQUIRE(bank.prefix()->data().cols() == backbone->spec().text_width);
  const Tokenizer& tok = backbone->tokenizer();
  const auto inputs = bank.token_inputs(tok, backbone->spec().context_length);
  REQUIRE(inputs.size() == 5);
  // <sos> x x x a video of excellent quality <eos>
  const std::vector<int> want{tok.sos(), tok.id("x"), tok.id("x"), tok.id("x"), tok.id("a"), tok.id("video"),
                              tok.id("of"), tok.id("excellent"), tok.id("quality"), tok.eos()};
  REQUIRE(inputs[0].token_ids == want);
  REQUIRE(inputs[0].prefix_offset == 1);
  // Initialized near the embedding of "x".
  const ad::Matrix x = backbone->token_embedding(tok.id("x"));
  for (int i = 0; i < 3; ++i) REQUIRE((bank.prefix()->data().row(i) - x).cwiseAbs().maxCoeff() < 0.2);

  BackboneSpec cramped = testing::small_spec();
  cramped.context_length = 9;
  REQUIRE_THROWS_AS(build_prompt_bank(PromptMode::kFiveLevelLearnable, *make_tiny_backbone(1, cramped), 0), Error);
}

TEST_CASE("prompt embeddings have one joint-space row per level", "[prompt]") {
  const BackboneSpec spec = testing::small_spec();
  QClipModel model(make_tiny_backbone(1, spec), ModelConfig::defaults_for(spec));
  const ad::Matrix t = model.prompt_embeddings().value();
  REQUIRE(t.rows() == 5);
  REQUIRE(t.cols() == spec.embed_dim);
  REQUIRE(model.prompt_embeddings().value() == t);

  ModelConfig frozen = ModelConfig::defaults_for(spec);
  frozen.prompt_mode = PromptMode::kFiveLevel;
  QClipModel fixed(make_tiny_backbone(1, spec), frozen);
  REQUIRE(fixed.prompts().prefix() == nullptr);
  REQUIRE(fixed.prompt_embeddings().value() == fixed.prompt_embeddings().value());
}

TEST_CASE("level score hand cases", "[head]") {
  REQUIRE(level_scores(ad::constant(row({1, 0})), ad::constant(row({1, 1}))).scalar() == Approx(1.0 / std::sqrt(2.0)));
  REQUIRE(level_scores(ad::constant(row({1, 0})), ad::constant(row({0, 3}))).scalar() == Approx(0.0).margin(1e-15));
  REQUIRE(level_scores(ad::constant(row({2, -1, 4})), ad::constant(row({2, -1, 4}))).scalar() == Approx(1.0));
  REQUIRE_THROWS_AS(level_scores(ad::constant(row({0, 0})), ad::constant(row({1, 1}))), Error);
  REQUIRE_THROWS_AS(level_scores(ad::constant(row({1, 0})), ad::constant(row({0, 0}))), Error);
  REQUIRE_THROWS_AS(level_scores(ad::constant(row({1, 0})), ad::constant(row({1, 0, 0}))), Error);

  const auto s = level_scores(std::vector<double>{1, 0}, {{1, 1}, {-1, 0}});
  REQUIRE(s.values[0] == Approx(1.0 / std::sqrt(2.0)));
  REQUIRE(s.values[1] == Approx(-1.0));
}

TEST_CASE("weighted sum hand cases", "[head]") {
  const std::vector<double> s{0.9, 0.8, 0.5, 0.2, 0.1};
  REQUIRE(predict_quality(LevelScores{s}, std::vector<double>{5, 4, 3, 2, 1}) == Approx(9.7));
  REQUIRE(predict_quality(LevelScores{s}, std::vector<double>{0, 1, 0, 0, 0}) == 0.8);
  REQUIRE(predict_quality(LevelScores{s}, std::vector<double>(5, 0.0)) == 0.0);

  QualityHead head(5, 1.0, 5.0);
  REQUIRE(head.weights().data() == row({5, 4, 3, 2, 1}));
  ad::Matrix col(5, 1);
  col << 0.9, 0.8, 0.5, 0.2, 0.1;
  REQUIRE(predict_quality(ad::constant(col), head).scalar() == Approx(9.7));
  REQUIRE(QualityHead(2, 1.0, 5.0).weights().data() == row({5, 1}));
}

TEST_CASE("level scores are scale invariant and the head is linear", "[head]") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    const ad::Matrix v = random_matrix(rng, 1, 6), t = random_matrix(rng, 5, 6);
    const double c = u(rng);
    const ad::Matrix a = level_scores(ad::constant(v), ad::constant(t)).value();
    const ad::Matrix b = level_scores(ad::constant(c * v), ad::constant(t)).value();
    REQUIRE((a - b).cwiseAbs().maxCoeff() <= 1e-12);
    REQUIRE(a.cwiseAbs().maxCoeff() <= 1.0);

    std::vector<double> w(5), s1(5), s2(5), mix(5);
    const double alpha = u(rng) - 5.0, beta = u(rng) - 5.0;
    for (int k = 0; k < 5; ++k) {
      w[k] = u(rng);
      s1[k] = u(rng) / 10.0;
      s2[k] = -u(rng) / 10.0;
      mix[k] = alpha * s1[k] + beta * s2[k];
    }
    REQUIRE(predict_quality(LevelScores{mix}, w) ==
            Approx(alpha * predict_quality(LevelScores{s1}, w) + beta * predict_quality(LevelScores{s2}, w)).margin(1e-12));
  }
}

TEST_CASE("quality gradient matches finite differences", "[head]") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    QualityHead head(5, 1.0, 5.0);
    head.weights().data() = random_matrix(rng, 1, 5);
    const ad::Matrix t = random_matrix(rng, 5, 4);
    const ad::Matrix v0 = random_matrix(rng, 1, 4);
    const ad::Var v = ad::leaf(v0, true);
    head.weights().zero_grad();
    ad::backward(predict_quality(level_scores(v, ad::constant(t)), head));
    const ad::Matrix gv = v.grad(), gw = head.weights().grad();

    auto q = [&](const ad::Matrix& vv) {
      return predict_quality(level_scores(ad::constant(vv), ad::constant(t)), head).scalar();
    };
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
      ad::Matrix p = v0, m = v0;
      p(0, i) += h;
      m(0, i) -= h;
      const double num = (q(p) - q(m)) / (2 * h);
      REQUIRE(std::abs(gv(0, i) - num) <= 1e-4 * std::max(1.0, std::abs(num)));
    }
    for (int k = 0; k < 5; ++k) {
      const double keep = head.weights().data()(0, k);
      head.weights().data()(0, k) = keep + h;
      const double up = q(v0);
      head.weights().data()(0, k) = keep - h;
      const double down = q(v0);
      head.weights().data()(0, k) = keep;
      const double num = (up - down) / (2 * h);
      REQUIRE(std::abs(gw(0, k) - num) <= 1e-4 * std::max(1.0, std::abs(num)));
    }
  }
}

TEST_CASE("one optimization step moves the prefix but not the token table", "[prompt]") {
  const BackboneSpec spec = testing::small_spec();
  QClipModel model(make_tiny_backbone(4, spec), ModelConfig::defaults_for(spec));
  const std::uint64_t backbone_before = model.backbone().checksum();
  const ad::Matrix prefix_before = model.prompts().prefix()->data();
  const ad::Matrix x_row = model.backbone().token_embedding(model.backbone().tokenizer().id("x"));

  std::mt19937_64 rng(1);
  std::vector<FrameSequence> videos;
  for (int i = 0; i < 4; ++i) videos.push_back(testing::random_frames(rng, spec));
  const std::vector<double> mos{1.0, 2.0, 4.0, 3.0};
  const ad::Var loss = batch_loss(model.predict_batch(videos), mos, 0.5);
  ad::backward(loss);
  TrainConfig cfg;
  TrainState state;
  const auto params = model.trainable_parameters();
  adamw_step(params, state, cfg, 1e-2);

  REQUIRE((model.prompts().prefix()->data() - prefix_before).norm() > 0.0);
  REQUIRE(model.backbone().checksum() == backbone_before);
  REQUIRE(model.backbone().token_embedding(model.backbone().tokenizer().id("x")) == x_row);
  REQUIRE(model.prompts().templates()[0] == "a video of excellent quality");
}
