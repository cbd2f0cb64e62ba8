// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// qclip command-line interface. Errors are reported on stderr as one JSON
// object {"error": <category>, "message": ...} with a category-specific exit
// code.

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "qclip/checkpoint.hpp"
#include "qclip/config.hpp"
#include "qclip/data.hpp"
#include "qclip/error.hpp"
#include "qclip/evaluation.hpp"
#include "qclip/frame_sampler.hpp"
#include "qclip/model.hpp"
#include "qclip/random.hpp"
#include "qclip/tensor_file.hpp"
#include "qclip/training.hpp"

namespace fs = std::filesystem;
using namespace qclip;

namespace {

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(10) << v;
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  write_file_atomic(path, text);
}

RunConfig config_from(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = path.empty() ? parse_run_config("") : load_run_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    require(eq != std::string::npos, ErrorCategory::kConfig, "--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.finalize();
  return cfg;
}

ModelConfig model_config_for(const RunConfig& cfg, const Backbone& backbone) {
  ModelConfig mc = cfg.model;
  if (mc.scma.adapted_layer_indices.empty()) {
    mc.scma.adapted_layer_indices = SCMAConfig::defaults_for(backbone.spec()).adapted_layer_indices;
  }
  return mc;
}

TrainConfig train_config_for(RunConfig cfg, const Backbone& backbone) {
  if (!cfg.frames_per_video_set) cfg.train.sampling.target_count = backbone.spec().num_frames;
  return cfg.train;
}

std::shared_ptr<Backbone> backbone_for_checkpoint(const CheckpointInfo& info, const std::string& path,
                                                  std::uint64_t seed) {
  if (!path.empty()) return load_backbone(path);
  return make_tiny_backbone(seed, info.backbone_spec);
}

// ---- sample -----------------------------------------------------------------

int cmd_sample(const std::string& input, const std::string& strategy, int frames, std::uint64_t seed,
               int stride) {
  const FrameSequence seq = decode_frames(input, DecodeConfig{stride, 0});
  SamplingPlan plan{parse_strategy(strategy), frames, seed};
  MotionProfile profile;
  if (needs_profile(plan.strategy) && seq.count() >= 2) {
    profile = motion_profile(limit_resolution(seq, 224));
  } else {
    profile.values.assign(seq.count(), 0.0);
  }
  const FramePlan fp = plan_frames(seq.count(), plan, &profile);
  nlohmann::json out{{"source", input},
                     {"num_frames", seq.count()},
                     {"strategy", strategy_name(plan.strategy)},
                     {"seed", seed},
                     {"indices", fp.indices},
                     {"repeated", fp.repeated}};
  std::vector<int> original;
  for (int i : fp.indices) original.push_back(seq.original_indices[i]);
  out["original_indices"] = original;
  if (plan.strategy == SamplingStrategy::kMixed && seq.count() >= frames) {
    out["chosen"] = strategy_name(sample_mixed(seq.count(), frames, profile, seed).chosen);
  }
  std::cout << out.dump() << "\n";
  return 0;
}

// ---- train ------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::vector<std::string>& overrides) {
  const RunConfig cfg = config_from(config_path, overrides);
  require(!cfg.manifest.empty(), ErrorCategory::kConfig, "train: data.manifest is required");
  auto backbone = make_backbone(cfg);
  const std::uint64_t checksum_before = backbone->checksum();
  QClipModel model(backbone, model_config_for(cfg, *backbone));
  const TrainConfig tc = train_config_for(cfg, *backbone);

  LoadedDataset data = load_dataset(read_manifest(cfg.manifest), backbone->spec(), cfg.load);
  std::vector<std::string> skipped = data.skipped;
  std::vector<VideoClip> train_set, val_set;
  if (!cfg.val_manifest.empty()) {
    train_set = std::move(data.clips);
    LoadedDataset val = load_dataset(read_manifest(cfg.val_manifest), backbone->spec(), cfg.load);
    val_set = std::move(val.clips);
    skipped.insert(skipped.end(), val.skipped.begin(), val.skipped.end());
  } else if (cfg.val_fraction > 0.0 && data.clips.size() >= 4) {
    const Partition p = make_partition(static_cast<int>(data.clips.size()), 1.0 - cfg.val_fraction, tc.seed);
    for (int i : p.train) train_set.push_back(data.clips[i]);
    for (int i : p.test) val_set.push_back(data.clips[i]);
  } else {
    train_set = std::move(data.clips);
  }

  fs::create_directories(cfg.output_dir);
  const AuditReport audit = assert_only_adapter_trainable(model);
  nlohmann::json audit_json{{"trainable", audit.names}, {"sizes", audit.sizes}, {"total", audit.total}};
  write_file_atomic(cfg.output_dir / "audit.json", audit_json.dump(2) + "\n");

  std::ofstream log(cfg.output_dir / "train_log.jsonl", std::ios::trunc);
  require(static_cast<bool>(log), ErrorCategory::kIo, "cannot write training log");
  bool first = true;
  const TrainResult result = train(model, train_set, val_set, tc, [&](const EpochRecord& rec) {
    nlohmann::json j = rec.to_json();
    if (first && !skipped.empty()) j["skipped"] = skipped;
    first = false;
    log << j.dump() << "\n";
    log.flush();
    std::cerr << j.dump() << "\n";
  });
  require(backbone->checksum() == checksum_before, ErrorCategory::kAudit,
          "backbone weights changed during training");

  nlohmann::json metrics = nlohmann::json::object();
  if (result.final_val) {
    metrics = {{"val_srocc", result.final_val->srocc}, {"val_plcc", result.final_val->plcc},
               {"val_krocc", result.final_val->krocc}, {"val_rmse", result.final_val->rmse}};
  }
  save_checkpoint(model, cfg.output_dir / "checkpoint_final.qclip", tc.to_json(), metrics);
  restore_snapshot(model, result.state.best_snapshot);
  nlohmann::json best_metrics = nlohmann::json::object();
  if (result.state.best_val_srocc) best_metrics["val_srocc"] = *result.state.best_val_srocc;
  save_checkpoint(model, cfg.output_dir / "checkpoint_best.qclip", tc.to_json(), best_metrics);
  std::cout << nlohmann::json{{"output_dir", cfg.output_dir.string()},
                              {"steps", result.state.step},
                              {"trainable_parameters", audit.total},
                              {"skipped", skipped}}
                   .dump()
            << "\n";
  return 0;
}

// ---- eval -------------------------------------------------------------------

std::map<std::string, double> read_id_value_csv(const fs::path& path, const std::string& column) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCategory::kIo, "cannot open " + path.string());
  std::string line;
  int col = -1;
  std::map<std::string, double> out;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (col < 0) {
      for (std::size_t i = 0; i < fields.size(); ++i) {
        if (fields[i] == column) col = static_cast<int>(i);
      }
      require(col > 0 && fields[0] == "video_id", ErrorCategory::kInputContract,
              path.string() + ": header needs video_id and " + column);
      continue;
    }
    require(static_cast<int>(fields.size()) > col, ErrorCategory::kInputContract,
            path.string() + ": short row '" + line + "'");
    try {
      out[fields[0]] = std::stod(fields[col]);
    } catch (const std::exception&) {
      fail(ErrorCategory::kInputContract, path.string() + ": bad number in '" + line + "'");
    }
  }
  return out;
}

void emit_report(const EvalReport& report, const std::string& json_out) {
  std::cout << report.to_table();
  if (!json_out.empty()) write_text(json_out, report.to_json().dump(2) + "\n");
}

int cmd_eval(const std::string& predictions, const std::string& labels, const std::string& config_path,
             const std::vector<std::string>& overrides, bool logistic, const std::string& json_out) {
  if (!predictions.empty()) {
    require(!labels.empty(), ErrorCategory::kConfig, "eval: --predictions needs --labels");
    const auto preds = read_id_value_csv(predictions, "q_pred");
    const auto truth = read_id_value_csv(labels, "mos");
    std::vector<double> p, y;
    for (const auto& [id, mos] : truth) {
      auto it = preds.find(id);
      require(it != preds.end(), ErrorCategory::kInputContract, "eval: no prediction for '" + id + "'");
      p.push_back(it->second);
      y.push_back(mos);
    }
    EvalReport report;
    report.splits.push_back({0, compute_metrics(p, y, EvalOptions{logistic}), static_cast<int>(p.size())});
    aggregate(report);
    emit_report(report, json_out);
    return 0;
  }
  require(!config_path.empty(), ErrorCategory::kConfig, "eval: give --predictions/--labels or --config");
  RunConfig cfg = config_from(config_path, overrides);
  if (logistic) cfg.protocol.eval.logistic_mapping = true;
  require(!cfg.manifest.empty(), ErrorCategory::kConfig, "eval: data.manifest is required");
  auto backbone = make_backbone(cfg);
  const ModelConfig mc = model_config_for(cfg, *backbone);
  const TrainConfig tc = train_config_for(cfg, *backbone);
  const LoadedDataset data = load_dataset(read_manifest(cfg.manifest), backbone->spec(), cfg.load);
  const ModelFactory factory = [&](std::uint64_t seed) {
    ModelConfig m = mc;
    m.seed = derive_seed(mc.seed, {seed});
    return std::make_unique<QClipModel>(backbone, m);
  };
  EvalReport report = run_split_protocol(data.clips, factory, tc, cfg.protocol);
  for (const auto& s : data.skipped) report.warnings.push_back("skipped " + s);
  emit_report(report, json_out);
  return report.splits.empty() ? exit_code(ErrorCategory::kNumericContract) : 0;
}

// ---- score / export-embeddings ---------------------------------------------

int cmd_score(const std::string& manifest_path, const std::string& checkpoint, const std::string& backbone_path,
              std::uint64_t backbone_seed, const std::string& output, std::uint64_t seed,
              const std::string& strategy) {
  const CheckpointInfo info = read_checkpoint_info(checkpoint);
  auto model = load_checkpoint(checkpoint, backbone_for_checkpoint(info, backbone_path, backbone_seed));
  const LoadedDataset data = load_dataset(read_manifest(manifest_path), model->backbone().spec());
  SamplingPlan plan{parse_strategy(strategy), model->backbone().spec().num_frames, seed};

  std::ostringstream csv;
  csv << "video_id,q_pred";
  for (QualityLevel l : model->prompts().levels()) csv << ",s_" << level_name(l);
  csv << "\n";
  for (std::size_t i = 0; i < data.clips.size(); ++i) {
    const Prediction p = model->predict(clip_frames(data.clips[i], eval_plan(plan, seed, i)));
    csv << data.clips[i].video_id << "," << fmt(p.quality);
    for (double s : p.scores.values) csv << "," << fmt(s);
    csv << "\n";
  }
  write_text(output, csv.str());
  return 0;
}

int cmd_export(const std::string& manifest_path, const std::string& checkpoint, const std::string& backbone_path,
               std::uint64_t backbone_seed, const std::string& out_prefix, std::uint64_t seed, bool frozen) {
  const CheckpointInfo info = read_checkpoint_info(checkpoint);
  auto model = load_checkpoint(checkpoint, backbone_for_checkpoint(info, backbone_path, backbone_seed));
  ad::NoGradGuard no_grad;
  auto row_csv = [](std::ostringstream& out, const std::string& id, const ad::Matrix& row) {
    out << id;
    for (Eigen::Index c = 0; c < row.cols(); ++c) out << "," << fmt(row(0, c));
    out << "\n";
  };
  auto header = [](std::ostringstream& out, const char* first, Eigen::Index d) {
    out << first;
    for (Eigen::Index c = 0; c < d; ++c) out << ",e" << c;
    out << "\n";
  };
  const ad::Matrix prompts = model->prompt_embeddings(!frozen).value();
  std::ostringstream pcsv;
  header(pcsv, "level", prompts.cols());
  for (Eigen::Index k = 0; k < prompts.rows(); ++k) {
    row_csv(pcsv, std::string(level_name(model->prompts().levels()[k])), prompts.row(k));
  }
  write_text(out_prefix + "prompts.csv", pcsv.str());
  if (!manifest_path.empty()) {
    const LoadedDataset data = load_dataset(read_manifest(manifest_path), model->backbone().spec());
    SamplingPlan plan{SamplingStrategy::kUniform, model->backbone().spec().num_frames, seed};
    std::ostringstream vcsv;
    header(vcsv, "video_id", prompts.cols());
    for (std::size_t i = 0; i < data.clips.size(); ++i) {
      const ad::Var v = model->video_embedding(clip_frames(data.clips[i], eval_plan(plan, seed, i)), !frozen);
      row_csv(vcsv, data.clips[i].video_id, v.value());
    }
    write_text(out_prefix + "videos.csv", vcsv.str());
  }
  return 0;
}

int cmd_make_toy(const std::string& out, int clips, std::uint64_t seed, int frames, int size) {
  const DatasetManifest m = make_synthetic_dataset(out, clips, seed, frames, size);
  std::cout << nlohmann::json{{"manifest", (fs::path(out) / "manifest.csv").string()}, {"clips", m.rows.size()}}.dump()
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qclip: parameter-efficient video quality assessment"};
  app.require_subcommand(1);

  std::string s_input, s_strategy = "UNISampl";
  int s_frames = 8, s_stride = 1;
  std::uint64_t s_seed = 0;
  auto* sample = app.add_subcommand("sample", "Select frame indices from a clip");
  sample->add_option("--input", s_input, "Video file or directory of numbered frames")->required();
  sample->add_option("--strategy", s_strategy, "RandSampl, UNISampl, UNIRandStart, MSESortedUNI, SegMSEMean, SegMSEMedian, Mixed");
  sample->add_option("--frames", s_frames, "Number of frames to select");
  sample->add_option("--seed", s_seed);
  sample->add_option("--stride", s_stride, "Decode every n-th frame");

  std::string t_config;
  std::vector<std::string> t_set;
  auto* trn = app.add_subcommand("train", "Fine-tune adapters, prompts and head");
  trn->add_option("--config", t_config, "Run config (key = value)")->required();
  trn->add_option("--set", t_set, "Override a config key: key=value");

  std::string e_pred, e_labels, e_config, e_json;
  std::vector<std::string> e_set;
  bool e_logistic = false;
  auto* ev = app.add_subcommand("eval", "Metrics from predictions, or the repeated split protocol");
  ev->add_option("--predictions", e_pred, "CSV with video_id,q_pred");
  ev->add_option("--labels", e_labels, "CSV with video_id,mos (a manifest works)");
  ev->add_option("--config", e_config, "Run config for the split protocol");
  ev->add_option("--set", e_set, "Override a config key: key=value");
  ev->add_flag("--logistic", e_logistic, "Fit a four-parameter logistic before PLCC/RMSE");
  ev->add_option("--json", e_json, "Write the JSON report here ('-' for stdout)");

  std::string c_manifest, c_checkpoint, c_backbone, c_output = "-", c_strategy = "UNISampl";
  std::uint64_t c_backbone_seed = 0, c_seed = 0;
  auto* score = app.add_subcommand("score", "Predict quality for every video of a manifest");
  score->add_option("--manifest", c_manifest)->required();
  score->add_option("--checkpoint", c_checkpoint)->required();
  score->add_option("--backbone", c_backbone, "Saved backbone file (default: tiny backbone)");
  score->add_option("--backbone-seed", c_backbone_seed);
  score->add_option("--output", c_output, "CSV path ('-' for stdout)");
  score->add_option("--seed", c_seed);
  score->add_option("--strategy", c_strategy);

  std::string x_manifest, x_checkpoint, x_backbone, x_prefix = "embeddings_";
  std::uint64_t x_backbone_seed = 0, x_seed = 0;
  bool x_frozen = false;
  auto* exp = app.add_subcommand("export-embeddings", "Write video and prompt embeddings as CSV");
  exp->add_option("--manifest", x_manifest);
  exp->add_option("--checkpoint", x_checkpoint)->required();
  exp->add_option("--backbone", x_backbone);
  exp->add_option("--backbone-seed", x_backbone_seed);
  exp->add_option("--output-prefix", x_prefix, "Writes <prefix>prompts.csv and <prefix>videos.csv");
  exp->add_option("--seed", x_seed);
  exp->add_flag("--frozen", x_frozen, "Bypass the adapters");

  std::string m_out;
  int m_clips = 32, m_frames = 16, m_size = 32;
  std::uint64_t m_seed = 0;
  auto* toy = app.add_subcommand("make-toy-data", "Generate the synthetic distortion dataset");
  toy->add_option("--out", m_out)->required();
  toy->add_option("--clips", m_clips);
  toy->add_option("--seed", m_seed);
  toy->add_option("--frames", m_frames);
  toy->add_option("--size", m_size);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*sample) return cmd_sample(s_input, s_strategy, s_frames, s_seed, s_stride);
    if (*trn) return cmd_train(t_config, t_set);
    if (*ev) return cmd_eval(e_pred, e_labels, e_config, e_set, e_logistic, e_json);
    if (*score) return cmd_score(c_manifest, c_checkpoint, c_backbone, c_backbone_seed, c_output, c_seed, c_strategy);
    if (*exp) return cmd_export(x_manifest, x_checkpoint, x_backbone, x_backbone_seed, x_prefix, x_seed, x_frozen);
    if (*toy) return cmd_make_toy(m_out, m_clips, m_seed, m_frames, m_size);
  } catch (const Error& e) {
    std::cerr << nlohmann::json{{"error", category_name(e.category())}, {"message", e.what()}}.dump() << "\n";
    return exit_code(e.category());
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", "internal"}, {"message", e.what()}}.dump() << "\n";
    return 1;
  }
  return 0;
}
