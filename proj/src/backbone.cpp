// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/backbone.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "qclip/error.hpp"
#include "qclip/random.hpp"
#include "qclip/tensor_file.hpp"

namespace qclip {

std::string_view modality_name(Modality m) {
  return m == Modality::kVisual ? "visual" : "text";
}

// --- BackboneSpec ---------------------------------------------------------

void BackboneSpec::validate() const {
  auto positive = [](int v, const char* what) {
    require(v > 0, ErrorCategory::kConfig,
            std::string("backbone spec: ") + what + " must be positive");
  };
  positive(num_visual_layers, "num_visual_layers");
  positive(num_text_layers, "num_text_layers");
  positive(visual_width, "visual_width");
  positive(text_width, "text_width");
  positive(embed_dim, "embed_dim");
  positive(frame_height, "frame_height");
  positive(frame_width, "frame_width");
  positive(context_length, "context_length");
  positive(patch_size, "patch_size");
  positive(num_heads, "num_heads");
  positive(mlp_ratio, "mlp_ratio");
  positive(vocab_size, "vocab_size");
  positive(num_frames, "num_frames");
  require(frame_height % patch_size == 0 && frame_width % patch_size == 0, ErrorCategory::kConfig,
          "backbone spec: frame resolution must be a multiple of patch_size");
  require(visual_width % num_heads == 0 && text_width % num_heads == 0, ErrorCategory::kConfig,
          "backbone spec: widths must be divisible by num_heads");
}

BackboneSpec BackboneSpec::tiny() { return BackboneSpec{}; }

BackboneSpec BackboneSpec::pe_core_l() {
  BackboneSpec s;
  s.num_visual_layers = 24;
  s.num_text_layers = 24;
  s.visual_width = 1024;
  s.text_width = 1024;
  s.embed_dim = 1024;
  s.frame_height = 336;
  s.frame_width = 336;
  s.context_length = 32;
  s.patch_size = 14;
  s.num_heads = 16;
  s.mlp_ratio = 4;
  s.vocab_size = 49408;
  s.num_frames = 8;
  return s;
}

nlohmann::json BackboneSpec::to_json() const {
  return {{"num_visual_layers", num_visual_layers},
          {"num_text_layers", num_text_layers},
          {"visual_width", visual_width},
          {"text_width", text_width},
          {"embed_dim", embed_dim},
          {"frame_height", frame_height},
          {"frame_width", frame_width},
          {"context_length", context_length},
          {"patch_size", patch_size},
          {"num_heads", num_heads},
          {"mlp_ratio", mlp_ratio},
          {"vocab_size", vocab_size},
          {"num_frames", num_frames}};
}

BackboneSpec BackboneSpec::from_json(const nlohmann::json& j) {
  BackboneSpec s;
  s.num_visual_layers = j.at("num_visual_layers");
  s.num_text_layers = j.at("num_text_layers");
  s.visual_width = j.at("visual_width");
  s.text_width = j.at("text_width");
  s.embed_dim = j.at("embed_dim");
  s.frame_height = j.at("frame_height");
  s.frame_width = j.at("frame_width");
  s.context_length = j.at("context_length");
  s.patch_size = j.at("patch_size");
  s.num_heads = j.at("num_heads");
  s.mlp_ratio = j.at("mlp_ratio");
  s.vocab_size = j.at("vocab_size");
  s.num_frames = j.at("num_frames");
  return s;
}

// --- Tokenizer ------------------------------------------------------------

Tokenizer::Tokenizer(std::vector<std::string> vocab) : vocab_(std::move(vocab)) {
  for (int i = 0; i < static_cast<int>(vocab_.size()); ++i) index_.emplace(vocab_[i], i);
  auto special = [&](const char* tok) {
    auto it = index_.find(tok);
    require(it != index_.end(), ErrorCategory::kConfig,
            std::string("tokenizer vocabulary lacks ") + tok);
    return it->second;
  };
  sos_ = special("<sos>");
  eos_ = special("<eos>");
  unk_ = special("<unk>");
}

int Tokenizer::id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? unk_ : it->second;
}

std::vector<int> Tokenizer::encode_words(std::string_view text) const {
  std::vector<int> ids;
  std::istringstream in{std::string(text)};
  std::string word;
  while (in >> word) {
    for (auto& ch : word) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    ids.push_back(id(word));
  }
  return ids;
}

Tokenizer Tokenizer::default_vocab() {
  return Tokenizer({"<sos>", "<eos>", "<pad>", "<unk>", "x", "a", "video", "of", "quality",
                    "excellent", "good", "fair", "poor", "bad", "photo", "image", "high", "low",
                    "the", "clip", "frame", "sharp", "blurry", "noisy", "clear"});
}

// --- Backbone -------------------------------------------------------------

Backbone::Backbone(BackboneSpec spec, Tokenizer tokenizer, PixelNormalization norm)
    : spec_(spec), tokenizer_(std::move(tokenizer)), norm_(norm) {
  spec_.validate();
  require(tokenizer_.size() <= spec_.vocab_size, ErrorCategory::kConfig,
          "tokenizer vocabulary larger than backbone vocab_size");
  const int pdim = spec_.patch_size * spec_.patch_size * 3;
  patch_weight_ = add("visual.patch_embed.weight", spec_.visual_width, pdim);
  patch_bias_ = add("visual.patch_embed.bias", 1, spec_.visual_width);
  visual_pos_ = add("visual.positional", spec_.num_patches(), spec_.visual_width);
  build_tower(visual_, "visual", spec_.visual_width, spec_.num_visual_layers);
  token_table_ = add("text.token_embedding", spec_.vocab_size, spec_.text_width);
  text_pos_ = add("text.positional", spec_.context_length, spec_.text_width);
  build_tower(text_, "text", spec_.text_width, spec_.num_text_layers);
  visual_.projection = add("visual.projection", spec_.embed_dim, spec_.visual_width);
  text_.projection = add("text.projection", spec_.embed_dim, spec_.text_width);
}

ParameterPtr Backbone::add(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
  auto p = std::make_shared<Parameter>(name, ad::Matrix::Zero(rows, cols), false);
  params_.push_back(p);
  return p;
}

void Backbone::build_tower(Tower& tower, const std::string& prefix, int width, int layers) {
  const int hidden = width * spec_.mlp_ratio;
  for (int k = 0; k < layers; ++k) {
    const std::string p = prefix + ".layers." + std::to_string(k) + ".";
    Layer l;
    l.ln1_gamma = add(p + "ln1.gamma", 1, width);
    l.ln1_beta = add(p + "ln1.beta", 1, width);
    l.qkv_weight = add(p + "attn.qkv.weight", 3 * width, width);
    l.qkv_bias = add(p + "attn.qkv.bias", 1, 3 * width);
    l.out_weight = add(p + "attn.out.weight", width, width);
    l.out_bias = add(p + "attn.out.bias", 1, width);
    l.ln2_gamma = add(p + "ln2.gamma", 1, width);
    l.ln2_beta = add(p + "ln2.beta", 1, width);
    l.fc1_weight = add(p + "mlp.fc1.weight", hidden, width);
    l.fc1_bias = add(p + "mlp.fc1.bias", 1, hidden);
    l.fc2_weight = add(p + "mlp.fc2.weight", width, hidden);
    l.fc2_bias = add(p + "mlp.fc2.bias", 1, width);
    tower.layers.push_back(std::move(l));
  }
  tower.post_gamma = add(prefix + ".post_ln.gamma", 1, width);
  tower.post_beta = add(prefix + ".post_ln.beta", 1, width);
}

void Backbone::randomize(std::uint64_t seed) {
  for (auto& p : params_) {
    Rng rng(derive_seed(seed, {fnv1a(p->name())}));
    ad::Matrix& m = p->data();
    const std::string& n = p->name();
    auto ends_with = [&](std::string_view suffix) {
      return n.size() >= suffix.size() && n.compare(n.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    double stddev;
    double center = 0.0;
    if (ends_with(".gamma")) {
      center = 1.0;
      stddev = 0.05;
    } else if (ends_with(".beta") || ends_with(".bias")) {
      stddev = 0.02;
    } else if (ends_with("positional")) {
      stddev = 0.1;
    } else if (ends_with("token_embedding")) {
      stddev = 1.0;
    } else {
      stddev = 1.0 / std::sqrt(static_cast<double>(m.cols()));
    }
    std::normal_distribution<double> dist(center, stddev);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  }
}

std::vector<Parameter*> Backbone::parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> Backbone::parameters() const {
  std::vector<const Parameter*> out;
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

Parameter* Backbone::find(std::string_view name) {
  for (auto& p : params_) {
    if (p->name() == name) return p.get();
  }
  return nullptr;
}

std::uint64_t Backbone::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : params_) {
    feed(p->name().data(), p->name().size());
    feed(p->data().data(), static_cast<std::size_t>(p->data().size()) * sizeof(double));
  }
  return h;
}

ad::Matrix Backbone::token_embedding(int token_id) const {
  require(token_id >= 0 && token_id < spec_.vocab_size, ErrorCategory::kInputContract,
          "token id out of range");
  return token_table_->data().row(token_id);
}

ad::Matrix Backbone::frame_patches(const Frame& frame) const {
  const int p = spec_.patch_size;
  const int ny = spec_.frame_height / p;
  const int nx = spec_.frame_width / p;
  ad::Matrix out(ny * nx, p * p * 3);
  for (int py = 0; py < ny; ++py) {
    for (int px = 0; px < nx; ++px) {
      const int row = py * nx + px;
      int col = 0;
      for (int y = 0; y < p; ++y) {
        for (int x = 0; x < p; ++x) {
          for (int c = 0; c < 3; ++c) {
            const double v = frame.at(py * p + y, px * p + x, c);
            out(row, col++) = (v - norm_.mean[c]) / norm_.stddev[c];
          }
        }
      }
    }
  }
  return out;
}

ad::Var Backbone::run_layer(const Layer& l, const ad::Var& x, int width, bool causal) const {
  const int heads = spec_.num_heads;
  const int dh = width / heads;
  ad::Var h = ad::layer_norm(x, l.ln1_gamma->var(), l.ln1_beta->var());
  ad::Var qkv = ad::linear(h, l.qkv_weight->var(), l.qkv_bias->var());
  std::vector<ad::Var> outs;
  outs.reserve(heads);
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int i = 0; i < heads; ++i) {
    ad::Var q = ad::slice_cols(qkv, i * dh, dh);
    ad::Var k = ad::slice_cols(qkv, width + i * dh, dh);
    ad::Var v = ad::slice_cols(qkv, 2 * width + i * dh, dh);
    ad::Var attn = ad::softmax_rows(ad::scale(ad::matmul_nt(q, k), inv), causal);
    outs.push_back(ad::matmul(attn, v));
  }
  ad::Var mixed = heads == 1 ? outs.front() : ad::concat_cols(outs);
  ad::Var y = ad::add(x, ad::linear(mixed, l.out_weight->var(), l.out_bias->var()));
  ad::Var m = ad::layer_norm(y, l.ln2_gamma->var(), l.ln2_beta->var());
  m = ad::gelu(ad::linear(m, l.fc1_weight->var(), l.fc1_bias->var()));
  m = ad::linear(m, l.fc2_weight->var(), l.fc2_bias->var());
  return ad::add(y, m);
}

ad::Var Backbone::run_tower(const Tower& tower, Modality m, ad::Var x, bool causal,
                            const AdapterHooks* hooks,
                            std::vector<LayerActivations>* trace) const {
  const int width = spec_.width(m);
  for (int k = 0; k < static_cast<int>(tower.layers.size()); ++k) {
    if (trace) trace->push_back({m, k, x.value()});
    ad::Var out = run_layer(tower.layers[k], x, width, causal);
    x = hooks ? hooks->after_layer(m, k, x, out) : out;
  }
  return x;
}

ad::Var Backbone::encode_video(const FrameSequence& frames, const AdapterHooks* hooks,
                               std::vector<LayerActivations>* trace) const {
  require(frames.count() == spec_.num_frames, ErrorCategory::kInputContract,
          "encode_video: expected " + std::to_string(spec_.num_frames) + " frames, got " +
              std::to_string(frames.count()));
  for (const auto& f : frames.frames) {
    require(f.height == spec_.frame_height && f.width == spec_.frame_width,
            ErrorCategory::kInputContract,
            "encode_video: frame is " + std::to_string(f.height) + "x" + std::to_string(f.width) +
                ", backbone expects " + std::to_string(spec_.frame_height) + "x" +
                std::to_string(spec_.frame_width));
  }
  std::vector<ad::Var> pooled;
  pooled.reserve(frames.frames.size());
  for (const auto& f : frames.frames) {
    ad::Var tokens = ad::constant(frame_patches(f));
    ad::Var x = ad::add(ad::linear(tokens, patch_weight_->var(), patch_bias_->var()),
                        visual_pos_->var());
    x = run_tower(visual_, Modality::kVisual, x, false, hooks, trace);
    pooled.push_back(ad::layer_norm(ad::mean_rows(x), visual_.post_gamma->var(),
                                    visual_.post_beta->var()));
  }
  // Temporal pooling happens before the projection stage.
  ad::Var projection_input = ad::mean_of(pooled);
  ad::Var projected = ad::matmul_nt(projection_input, visual_.projection->var());
  return hooks ? hooks->after_projection(Modality::kVisual, projection_input, projected)
               : projected;
}

ad::Var Backbone::encode_text(const TextInput& input, const AdapterHooks* hooks,
                              std::vector<LayerActivations>* trace) const {
  const int len = static_cast<int>(input.token_ids.size());
  require(len >= 1, ErrorCategory::kInputContract, "encode_text: empty token sequence");
  require(len <= spec_.context_length, ErrorCategory::kInputContract,
          "encode_text: " + std::to_string(len) + " tokens exceed context length " +
              std::to_string(spec_.context_length));
  int prefix_len = 0;
  if (input.prefix.valid()) {
    prefix_len = static_cast<int>(input.prefix.rows());
    require(input.prefix.cols() == spec_.text_width, ErrorCategory::kInputContract,
            "encode_text: prefix width differs from text width");
    require(input.prefix_offset >= 0 && input.prefix_offset + prefix_len <= len,
            ErrorCategory::kInputContract, "encode_text: prefix does not fit the sequence");
  }

  std::vector<ad::Var> rows;
  rows.reserve(len);
  for (int i = 0; i < len;) {
    if (prefix_len > 0 && i == input.prefix_offset) {
      rows.push_back(input.prefix);
      i += prefix_len;
      continue;
    }
    const int id = input.token_ids[i];
    require(id >= 0 && id < spec_.vocab_size, ErrorCategory::kInputContract,
            "encode_text: token id out of range");
    rows.push_back(ad::slice_rows(token_table_->var(), id, 1));
    ++i;
  }
  ad::Var x = ad::add(ad::concat_rows(rows), ad::slice_rows(text_pos_->var(), 0, len));
  x = run_tower(text_, Modality::kText, x, true, hooks, trace);
  ad::Var last = ad::layer_norm(ad::slice_rows(x, len - 1, 1), text_.post_gamma->var(),
                                text_.post_beta->var());
  ad::Var projected = ad::matmul_nt(last, text_.projection->var());
  return hooks ? hooks->after_projection(Modality::kText, last, projected) : projected;
}

void Backbone::save(const std::filesystem::path& path) const {
  nlohmann::json meta = {{"kind", "backbone"},
                         {"spec", spec_.to_json()},
                         {"vocab", tokenizer_.vocab()},
                         {"pixel_mean", norm_.mean},
                         {"pixel_std", norm_.stddev}};
  std::vector<NamedTensor> tensors;
  for (const auto& p : params_) tensors.push_back({p->name(), p->data()});
  write_tensor_file(path, meta, tensors);
}

std::shared_ptr<Backbone> make_tiny_backbone(std::uint64_t seed, const BackboneSpec& spec) {
  auto b = std::make_shared<Backbone>(spec, Tokenizer::default_vocab(), PixelNormalization{});
  b->randomize(seed);
  return b;
}

std::shared_ptr<Backbone> load_backbone(const std::filesystem::path& path) {
  TensorFile file = read_tensor_file(path);
  require(file.meta.value("kind", "") == "backbone", ErrorCategory::kCheckpoint,
          path.string() + " is not a backbone weight file");
  PixelNormalization norm;
  norm.mean = file.meta.at("pixel_mean").get<std::array<double, 3>>();
  norm.stddev = file.meta.at("pixel_std").get<std::array<double, 3>>();
  auto b = std::make_shared<Backbone>(BackboneSpec::from_json(file.meta.at("spec")),
                                      Tokenizer(file.meta.at("vocab").get<std::vector<std::string>>()),
                                      norm);
  std::ostringstream diff;
  for (Parameter* p : b->parameters()) {
    const NamedTensor* t = file.find(p->name());
    if (!t) {
      diff << "  missing " << p->name() << "\n";
      continue;
    }
    if (t->value.rows() != p->data().rows() || t->value.cols() != p->data().cols()) {
      diff << "  " << p->name() << ": expected [" << p->data().rows() << "," << p->data().cols()
           << "], found [" << t->value.rows() << "," << t->value.cols() << "]\n";
      continue;
    }
    p->data() = t->value;
  }
  require(diff.str().empty(), ErrorCategory::kCheckpoint,
          "backbone weights do not match spec in " + path.string() + ":\n" + diff.str());
  return b;
}

}  // namespace qclip
