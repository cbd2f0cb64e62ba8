// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "qclip/error.hpp"
#include "qclip/random.hpp"

namespace qclip {

namespace {

constexpr double kStdEps = 1e-12;

struct LossEval {
  double value = 0.0;
  std::vector<double> grad;  // d loss / d preds
};

LossEval eval_loss(std::span<const double> p, std::span<const double> y, double lambda) {
  const std::size_t n = p.size();
  LossEval out;
  out.grad.assign(n, 0.0);
  if (n == 1) {
    const double d = p[0] - y[0];
    out.value = std::abs(d);
    out.grad[0] = d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0);
    return out;
  }
  const double mp = std::accumulate(p.begin(), p.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  std::vector<double> pc(n), yc(n);
  double spp = 0, syy = 0, spy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    pc[i] = p[i] - mp;
    yc[i] = y[i] - my;
    spp += pc[i] * pc[i];
    syy += yc[i] * yc[i];
    spy += pc[i] * yc[i];
  }

  // Correlation term; undefined correlations contribute r = 0 without gradient.
  if (spp > 0.0 && syy > 0.0) {
    const double sp = std::sqrt(spp), sy = std::sqrt(syy);
    const double r = spy / (sp * sy);
    out.value += 0.5 * (1.0 - r);
    for (std::size_t i = 0; i < n; ++i) {
      out.grad[i] += -0.5 * (yc[i] / (sp * sy) - r * pc[i] / spp);
    }
  } else {
    out.value += 0.5;
  }

  if (lambda == 0.0) return out;
  const double s = std::sqrt(spp / n + kStdEps);
  std::vector<double> gz(n, 0.0);
  double hinge = 0.0;
  long pairs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (!(y[i] > y[j])) continue;
      ++pairs;
      const double m = (pc[j] - pc[i]) / s;
      if (m > 0.0) {
        hinge += m;
        gz[j] += 1.0;
        gz[i] -= 1.0;
      }
    }
  }
  if (pairs == 0) return out;
  out.value += lambda * hinge / pairs;
  double gdotpc = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    gz[k] *= lambda / pairs;
    gdotpc += gz[k] * pc[k];
  }
  std::vector<double> gpc(n);
  double mean_gpc = 0.0;
  for (std::size_t m = 0; m < n; ++m) {
    gpc[m] = gz[m] / s - gdotpc * pc[m] / (n * s * s * s);
    mean_gpc += gpc[m] / n;
  }
  for (std::size_t m = 0; m < n; ++m) out.grad[m] += gpc[m] - mean_gpc;
  return out;
}

bool is_trainable_namespace(const std::string& name) {
  for (const char* prefix : {"scma.", "pscma.", "prompt.", "head."}) {
    if (name.rfind(prefix, 0) == 0) return true;
  }
  return false;
}

std::string serialize_rng(const Rng& rng) {
  std::ostringstream ss;
  ss << rng;
  return ss.str();
}

}  // namespace

void TrainConfig::validate() const {
  require(learning_rate > 0.0 && lr_floor >= 0.0 && lr_floor <= learning_rate, ErrorCategory::kConfig,
          "train: need 0 <= lr_floor <= learning_rate, learning_rate > 0");
  require(weight_decay >= 0.0, ErrorCategory::kConfig, "train: weight_decay must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0,
          ErrorCategory::kConfig, "train: bad AdamW moments configuration");
  require(epochs >= 1, ErrorCategory::kConfig, "train: epochs must be >= 1");
  require(batch_size >= 1, ErrorCategory::kConfig, "train: batch_size must be >= 1");
  require(sampling.target_count >= 1, ErrorCategory::kConfig, "train: frames_per_video must be >= 1");
  require(rank_weight >= 0.0, ErrorCategory::kConfig, "train: rank_weight must be >= 0");
  require(max_steps >= 0, ErrorCategory::kConfig, "train: max_steps must be >= 0");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"learning_rate", learning_rate},
          {"lr_floor", lr_floor},
          {"weight_decay", weight_decay},
          {"beta1", beta1},
          {"beta2", beta2},
          {"adam_eps", adam_eps},
          {"epochs", epochs},
          {"batch_size", batch_size},
          {"frames_per_video", sampling.target_count},
          {"sampling_strategy", strategy_name(sampling.strategy)},
          {"rank_weight", rank_weight},
          {"max_steps", max_steps},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate");
  c.lr_floor = j.at("lr_floor");
  c.weight_decay = j.at("weight_decay");
  c.beta1 = j.at("beta1");
  c.beta2 = j.at("beta2");
  c.adam_eps = j.at("adam_eps");
  c.epochs = j.at("epochs");
  c.batch_size = j.at("batch_size");
  c.sampling.target_count = j.at("frames_per_video");
  c.sampling.strategy = parse_strategy(j.at("sampling_strategy").get<std::string>());
  c.rank_weight = j.at("rank_weight");
  c.max_steps = j.at("max_steps");
  c.seed = j.at("seed");
  c.sampling.seed = c.seed;
  return c;
}

ad::Var batch_loss(const ad::Var& preds, std::span<const double> mos, double rank_weight) {
  require(preds.cols() == 1 && static_cast<std::size_t>(preds.rows()) == mos.size() && !mos.empty(),
          ErrorCategory::kInputContract, "batch_loss: preds must be B x 1 with B labels");
  const ad::Matrix& pv = preds.value();
  std::vector<double> p(pv.data(), pv.data() + pv.size());
  LossEval ev = eval_loss(p, mos, rank_weight);
  require(std::isfinite(ev.value), ErrorCategory::kNumericContract, "batch_loss is not finite");
  ad::Matrix value(1, 1);
  value(0, 0) = ev.value;
  ad::Matrix g = Eigen::Map<const ad::Matrix>(ev.grad.data(), pv.rows(), 1);
  return ad::make_op(std::move(value), {preds}, [g](ad::Node& self) {
    ad::Node& parent = *self.parents[0];
    if (parent.requires_grad) parent.accumulate(g * self.grad(0, 0));
  });
}

double batch_loss(std::span<const double> preds, std::span<const double> mos, double rank_weight) {
  require(preds.size() == mos.size() && !mos.empty(), ErrorCategory::kInputContract,
          "batch_loss: preds and labels differ in length");
  return eval_loss(preds, mos, rank_weight).value;
}

double cosine_lr(const TrainConfig& cfg, long step, long total) {
  if (total <= 1) return cfg.learning_rate;
  const double t = static_cast<double>(std::clamp(step, 0L, total - 1)) / static_cast<double>(total - 1);
  return cfg.lr_floor + (cfg.learning_rate - cfg.lr_floor) * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void adamw_step(std::span<Parameter* const> params, TrainState& state, const TrainConfig& cfg, double lr) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (Parameter* p : params) {
    if (!p->trainable()) continue;
    const ad::Matrix g = p->grad();
    auto [it, inserted] = state.moments.try_emplace(p->name());
    AdamMoments& mo = it->second;
    if (inserted) {
      mo.m = ad::Matrix::Zero(g.rows(), g.cols());
      mo.v = ad::Matrix::Zero(g.rows(), g.cols());
    }
    mo.m = cfg.beta1 * mo.m + (1.0 - cfg.beta1) * g;
    mo.v = cfg.beta2 * mo.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    ad::Matrix& w = p->data();
    if (p->decay()) w *= (1.0 - lr * cfg.weight_decay);
    w.array() -= lr * (mo.m.array() / bc1) / ((mo.v.array() / bc2).sqrt() + cfg.adam_eps);
  }
}

AuditReport assert_only_adapter_trainable(const QClipModel& model) {
  for (const Parameter* p : model.backbone().parameters()) {
    require(!p->trainable(), ErrorCategory::kAudit, "backbone tensor '" + p->name() + "' is trainable");
  }
  AuditReport report;
  for (const Parameter* p : model.trainable_parameters()) {
    require(is_trainable_namespace(p->name()), ErrorCategory::kAudit,
            "unexpected tensor '" + p->name() + "' in the trainable set");
    require(p->trainable(), ErrorCategory::kAudit, "tensor '" + p->name() + "' is frozen");
    report.names.push_back(p->name());
    report.sizes.push_back(p->size());
    report.total += p->size();
  }
  const Eigen::Index expected = trainable_param_count(model.adapters(), model.prompts(), model.head());
  require(report.total == expected, ErrorCategory::kAudit,
          "trainable scalar count " + std::to_string(report.total) + " differs from " +
              std::to_string(expected));
  return report;
}

nlohmann::json EpochRecord::to_json() const {
  nlohmann::json j{{"epoch", epoch}, {"loss", loss}, {"lr", lr}};
  j["val_srocc"] = val_srocc ? nlohmann::json(*val_srocc) : nlohmann::json(nullptr);
  j["val_plcc"] = val_plcc ? nlohmann::json(*val_plcc) : nlohmann::json(nullptr);
  return j;
}

SamplingPlan eval_plan(const SamplingPlan& base, std::uint64_t seed, std::size_t clip_index) {
  SamplingPlan plan = base;
  // Mixing is a training-time augmentation; evaluation uses uniform sampling.
  if (plan.strategy == SamplingStrategy::kMixed) plan.strategy = SamplingStrategy::kUniform;
  plan.seed = derive_seed(seed, {fnv1a("eval"), static_cast<std::uint64_t>(clip_index)});
  return plan;
}

std::vector<double> predict_clips(const QClipModel& model, std::span<const VideoClip> clips,
                                  const SamplingPlan& plan, std::uint64_t seed) {
  ad::NoGradGuard no_grad;
  const ad::Var prompts = model.prompt_embeddings();
  std::vector<double> out;
  out.reserve(clips.size());
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const FrameSequence frames = clip_frames(clips[i], eval_plan(plan, seed, i));
    out.push_back(predict_quality(level_scores(model.video_embedding(frames), prompts), model.head()).scalar());
  }
  return out;
}

std::map<std::string, ad::Matrix> snapshot(const QClipModel& model) {
  std::map<std::string, ad::Matrix> out;
  for (const Parameter* p : model.trainable_parameters()) out[p->name()] = p->data();
  return out;
}

void restore_snapshot(QClipModel& model, const std::map<std::string, ad::Matrix>& snap) {
  for (Parameter* p : model.trainable_parameters()) {
    auto it = snap.find(p->name());
    if (it != snap.end()) p->data() = it->second;
  }
}

TrainResult train(QClipModel& model, std::span<const VideoClip> train_set,
                  std::span<const VideoClip> val_set, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  cfg.validate();
  require(!train_set.empty(), ErrorCategory::kInputContract, "train: empty training set");
  require(cfg.sampling.target_count == model.backbone().spec().num_frames, ErrorCategory::kConfig,
          "train: frames_per_video " + std::to_string(cfg.sampling.target_count) +
              " differs from the backbone's " + std::to_string(model.backbone().spec().num_frames));
  assert_only_adapter_trainable(model);

  const std::vector<Parameter*> params = model.trainable_parameters();
  const long n = static_cast<long>(train_set.size());
  const long batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  long total = batches * cfg.epochs;
  if (cfg.max_steps > 0) total = std::min<long>(total, cfg.max_steps);

  TrainResult result;
  Rng rng(derive_seed(cfg.seed, {fnv1a("shuffle")}));
  std::vector<int> order(static_cast<std::size_t>(n));
  double lr = cosine_lr(cfg, 0, total);

  for (int epoch = 1; epoch <= cfg.epochs && result.state.step < total; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int loss_count = 0;
    for (long b = 0; b < batches && result.state.step < total; ++b) {
      const long lo = b * cfg.batch_size;
      const long hi = std::min(n, lo + cfg.batch_size);
      std::vector<FrameSequence> videos;
      std::vector<double> mos;
      for (long k = lo; k < hi; ++k) {
        const int idx = order[static_cast<std::size_t>(k)];
        SamplingPlan plan = cfg.sampling;
        plan.seed = derive_seed(cfg.seed, {fnv1a("sample"), static_cast<std::uint64_t>(epoch),
                                           static_cast<std::uint64_t>(idx)});
        videos.push_back(clip_frames(train_set[idx], plan));
        mos.push_back(train_set[idx].mos);
      }
      for (Parameter* p : params) p->zero_grad();
      const ad::Var loss = batch_loss(model.predict_batch(videos), mos, cfg.rank_weight);
      ad::backward(loss);
      lr = cosine_lr(cfg, result.state.step, total);
      adamw_step(params, result.state, cfg, lr);
      loss_sum += loss.scalar();
      ++loss_count;
    }
    for (Parameter* p : params) p->zero_grad();

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = loss_sum / std::max(loss_count, 1);
    rec.lr = lr;
    if (val_set.size() >= 2) {
      try {
        const auto preds = predict_clips(model, val_set, cfg.sampling, cfg.seed);
        std::vector<double> labels;
        for (const auto& c : val_set) labels.push_back(c.mos);
        const Metrics m = compute_metrics(preds, labels);
        rec.val_srocc = m.srocc;
        rec.val_plcc = m.plcc;
        result.final_val = m;
        if (!result.state.best_val_srocc || m.srocc > *result.state.best_val_srocc) {
          result.state.best_val_srocc = m.srocc;
          result.state.best_snapshot = snapshot(model);
        }
      } catch (const Error& e) {
        if (e.category() != ErrorCategory::kNumericContract) throw;
      }
    }
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  if (result.state.best_snapshot.empty()) result.state.best_snapshot = snapshot(model);
  result.state.rng_state = serialize_rng(rng);
  return result;
}

EvalReport run_split_protocol(std::span<const VideoClip> clips, const ModelFactory& factory,
                              const TrainConfig& cfg, const SplitProtocolOptions& options) {
  require(!clips.empty(), ErrorCategory::kInputContract, "split protocol: no clips");
  std::vector<double> labels;
  for (const auto& c : clips) labels.push_back(c.mos);
  const SplitRunner runner = [&](const Partition& part, std::uint64_t seed) {
    std::vector<VideoClip> train_part, test_part;
    for (int i : part.train) train_part.push_back(clips[i]);
    for (int i : part.test) test_part.push_back(clips[i]);
    std::unique_ptr<QClipModel> model = factory(seed);
    TrainConfig split_cfg = cfg;
    split_cfg.seed = derive_seed(cfg.seed, {fnv1a("split"), seed});
    train(*model, train_part, {}, split_cfg);
    return predict_clips(*model, test_part, split_cfg.sampling, split_cfg.seed);
  };
  return run_split_protocol(labels, runner, options);
}

}  // namespace qclip
