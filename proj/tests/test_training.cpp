// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "oracles.hpp"
#include "qclip/data.hpp"
#include "qclip/error.hpp"
#include "qclip/training.hpp"
#include "test_support.hpp"

using namespace qclip;
using Catch::Approx;
using Vec = std::vector<double>;

namespace {

ad::Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  ad::Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

Vec random_vec(std::mt19937_64& rng, int n) {
  std::uniform_real_distribution<double> u(1.0, 5.0);
  Vec v(static_cast<std::size_t>(n));
  for (double& x : v) x = u(rng);
  return v;
}

const LoadedDataset& toy_data() {
  static const LoadedDataset data = [] {
    const auto dir = testing::scratch_dir("training_toy");
    const DatasetManifest m = make_synthetic_dataset(dir, 32, 0);
    return load_dataset(m, BackboneSpec::tiny());
  }();
  return data;
}

}  // namespace

TEST_CASE("batch loss matches the loop oracle", "[loss]") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 8);
    Vec p = random_vec(rng, n), y = random_vec(rng, n);
    if (trial % 5 == 0) y[1] = y[0];  // tied labels form no pair
    const double lambda = (trial % 3) * 0.5;
    REQUIRE(batch_loss(p, y, lambda) == Approx(oracle::batch_loss(p, y, lambda)).margin(1e-12));
    const ad::Matrix col = Eigen::Map<const ad::Matrix>(p.data(), n, 1);
    REQUIRE(batch_loss(ad::constant(col), y, lambda).scalar() == Approx(batch_loss(p, y, lambda)).margin(1e-12));
  }
}

TEST_CASE("batch loss reference points", "[loss]") {
  const Vec y{1.0, 2.5, 4.0, 3.0, 5.0, 1.5};
  REQUIRE(batch_loss(y, y, 0.5) == Approx(0.0).margin(1e-12));
  Vec neg(y.size());
  std::transform(y.begin(), y.end(), neg.begin(), [](double v) { return -v; });
  REQUIRE(batch_loss(neg, y, 0.0) == Approx(1.0));
  Vec affine(y.size());
  std::transform(y.begin(), y.end(), affine.begin(), [](double v) { return 3.0 * v - 7.0; });
  const Vec p{0.3, 0.1, 0.9, 0.2, 0.4, 0.8};
  Vec p_affine(p.size());
  std::transform(p.begin(), p.end(), p_affine.begin(), [](double v) { return 2.0 * v + 1.0; });
  REQUIRE(batch_loss(p_affine, y, 0.5) == Approx(batch_loss(p, y, 0.5)).margin(1e-9));
  REQUIRE(batch_loss(Vec{3.0}, Vec{4.5}, 0.5) == Approx(1.5));
  // Constant predictions carry no correlation: r counts as 0.
  REQUIRE(batch_loss(Vec{2, 2, 2}, Vec{1, 2, 3}, 0.0) == Approx(0.5));
}

TEST_CASE("batch loss gradient through head weights and video embeddings", "[loss][gradcheck]") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int b = 3 + static_cast<int>(rng() % 4), d = 4;
    const ad::Matrix prompts = random_matrix(rng, 5, d);
    const ad::Matrix v0 = random_matrix(rng, b, d);
    const Vec mos = random_vec(rng, b);
    QualityHead head(5, 1.0, 5.0);
    head.weights().data() = random_matrix(rng, 1, 5);
    auto loss_of = [&](const ad::Var& videos) {
      std::vector<ad::Var> preds;
      for (int i = 0; i < b; ++i) {
        preds.push_back(predict_quality(level_scores(ad::slice_rows(videos, i, 1), ad::constant(prompts)), head));
      }
      return batch_loss(ad::concat_rows(preds), mos, 0.5);
    };
    const ad::Var v = ad::leaf(v0, true);
    head.weights().zero_grad();
    ad::backward(loss_of(v));
    const ad::Matrix gv = v.grad(), gw = head.weights().grad();

    const double h = 1e-6;
    auto close = [](double a, double num) { return std::abs(a - num) <= 1e-4 * std::max(1e-2, std::abs(num)); };
    for (Eigen::Index i = 0; i < v0.size(); ++i) {
      ad::Matrix up = v0, down = v0;
      up.data()[i] += h;
      down.data()[i] -= h;
      const double num = (loss_of(ad::constant(up)).scalar() - loss_of(ad::constant(down)).scalar()) / (2 * h);
      INFO("trial " << trial << " video element " << i);
      REQUIRE(close(gv.data()[i], num));
    }
    for (int k = 0; k < 5; ++k) {
      const double keep = head.weights().data()(0, k);
      head.weights().data()(0, k) = keep + h;
      const double up = loss_of(ad::constant(v0)).scalar();
      head.weights().data()(0, k) = keep - h;
      const double down = loss_of(ad::constant(v0)).scalar();
      head.weights().data()(0, k) = keep;
      INFO("trial " << trial << " weight " << k);
      REQUIRE(close(gw(0, k), (up - down) / (2 * h)));
    }
  }
}

TEST_CASE("cosine schedule endpoints", "[optim]") {
  TrainConfig cfg;
  REQUIRE(cosine_lr(cfg, 0, 10) == Approx(1e-3));
  REQUIRE(cosine_lr(cfg, 9, 10) == Approx(1e-6));
  REQUIRE(cosine_lr(cfg, 0, 1) == Approx(1e-3));
  REQUIRE(cosine_lr(cfg, 2, 5) == Approx(1e-6 + (1e-3 - 1e-6) * 0.5));
}

TEST_CASE("AdamW first step and decoupled decay", "[optim]") {
  auto decayed = std::make_shared<Parameter>("scma.w", ad::Matrix::Constant(1, 2, 2.0), true, true);
  auto plain = std::make_shared<Parameter>("scma.gate", ad::Matrix::Constant(1, 1, 2.0), true, false);
  decayed->var().node()->grad = ad::Matrix::Constant(1, 2, 0.3);
  plain->var().node()->grad = ad::Matrix::Constant(1, 1, -4.0);
  TrainConfig cfg;
  TrainState state;
  std::vector<Parameter*> params{decayed.get(), plain.get()};
  adamw_step(params, state, cfg, 0.1);
  // Bias-corrected first step moves by lr * sign(g); decay adds lr * wd * w.
  REQUIRE(decayed->data()(0, 0) == Approx(2.0 - 0.1 * 0.3 / (0.3 + 1e-8) - 0.1 * 0.01 * 2.0).epsilon(1e-9));
  REQUIRE(plain->data()(0, 0) == Approx(2.0 + 0.1).epsilon(1e-6));
  REQUIRE(state.moments.count("scma.w") == 1);
}

TEST_CASE("audit lists exactly the adapter, prompt and head tensors", "[audit]") {
  const BackboneSpec spec = testing::small_spec();
  QClipModel model(make_tiny_backbone(1, spec), ModelConfig::defaults_for(spec));
  const AuditReport report = assert_only_adapter_trainable(model);
  REQUIRE(report.total == trainable_param_count(model.adapters(), model.prompts(), model.head()));
  for (const auto& name : report.names) {
    const bool ok = name.starts_with("scma.") || name.starts_with("pscma.") || name.starts_with("prompt.") ||
                    name.starts_with("head.");
    REQUIRE(ok);
  }
  REQUIRE(std::count(report.names.begin(), report.names.end(), "prompt.prefix") == 1);
  REQUIRE(std::count(report.names.begin(), report.names.end(), "head.weights") == 1);

  model.backbone().parameters().front()->set_trainable(true);
  try {
    assert_only_adapter_trainable(model);
    FAIL("audit accepted a trainable backbone tensor");
  } catch (const Error& e) {
    REQUIRE(e.category() == ErrorCategory::kAudit);
  }
}

TEST_CASE("visual-only placement has no text adapter tensors", "[audit]") {
  const BackboneSpec spec = testing::small_spec();
  ModelConfig mc = ModelConfig::defaults_for(spec);
  mc.scma.placement = BranchPlacement::kVisualOnly;
  QClipModel model(make_tiny_backbone(1, spec), mc);
  for (const auto& name : assert_only_adapter_trainable(model).names) REQUIRE(name.find("text") == std::string::npos);
}

TEST_CASE("training leaves the backbone intact and is deterministic", "[train]") {
  const LoadedDataset& data = toy_data();
  REQUIRE(data.clips.size() == 32);
  const std::span<const VideoClip> all(data.clips);
  TrainConfig cfg;
  cfg.learning_rate = 0.02;
  cfg.epochs = 3;
  cfg.batch_size = 6;
  cfg.seed = 3;

  auto run = [&] {
    QClipModel model(make_tiny_backbone(0, BackboneSpec::tiny()), ModelConfig::defaults_for(BackboneSpec::tiny()));
    const std::uint64_t before = model.backbone().checksum();
    const ad::Matrix head_before = model.head().weights().data();
    TrainResult r = train(model, all.subspan(0, 12), all.subspan(12), cfg);
    REQUIRE(model.backbone().checksum() == before);
    REQUIRE(model.head().weights().data() != head_before);
    return r;
  };
  const TrainResult a = run(), b = run();
  REQUIRE(a.log.size() == 3);
  REQUIRE(a.state.step == 6);
  for (std::size_t i = 0; i < a.log.size(); ++i) {
    REQUIRE(a.log[i].loss == b.log[i].loss);
    REQUIRE(a.log[i].val_srocc == b.log[i].val_srocc);
  }
  REQUIRE(a.log.back().lr < a.log.front().lr);
}

TEST_CASE("training loss strictly decreases over the first three epochs", "[train]") {
  const LoadedDataset& data = toy_data();
  TrainConfig cfg;
  // Toy learning rate, as in the end-to-end run. At 1e-3 the epoch means of
  // three correlation batches are dominated by batch composition.
  cfg.learning_rate = 0.02;
  QClipModel model(make_tiny_backbone(0, BackboneSpec::tiny()), ModelConfig::defaults_for(BackboneSpec::tiny()));
  const TrainResult r = train(model, data.clips, {}, cfg);
  for (const auto& rec : r.log) UNSCOPED_INFO("epoch " << rec.epoch << " loss " << rec.loss);
  REQUIRE(r.log.size() == 8);
  REQUIRE(r.log[1].loss < r.log[0].loss);
  REQUIRE(r.log[2].loss < r.log[1].loss);
}

TEST_CASE("train rejects a frame count that disagrees with the backbone", "[train]") {
  TrainConfig cfg;
  cfg.sampling.target_count = 4;
  QClipModel model(make_tiny_backbone(0, BackboneSpec::tiny()), ModelConfig::defaults_for(BackboneSpec::tiny()));
  REQUIRE_THROWS_AS(train(model, toy_data().clips, {}, cfg), Error);
  cfg.sampling.target_count = 8;
  cfg.batch_size = 0;
  REQUIRE_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("train config round-trips through json", "[train]") {
  TrainConfig cfg;
  cfg.learning_rate = 0.05;
  cfg.sampling.strategy = SamplingStrategy::kMixed;
  cfg.seed = 17;
  const TrainConfig back = TrainConfig::from_json(cfg.to_json());
  REQUIRE(back.learning_rate == 0.05);
  REQUIRE(back.sampling.strategy == SamplingStrategy::kMixed);
  REQUIRE(back.seed == 17);
}
