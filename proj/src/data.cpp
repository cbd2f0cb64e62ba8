// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>

#include "qclip/error.hpp"
#include "qclip/random.hpp"
#include "qclip/tensor_file.hpp"

namespace fs = std::filesystem;

namespace qclip {

void FrameSequence::validate() const {
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const Frame& f = frames[i];
    require(f.height == height() && f.width == width() &&
                f.pixels.size() == static_cast<std::size_t>(f.height) * f.width * 3,
            ErrorCategory::kInputContract,
            source_id + ": frame " + std::to_string(i) + " has a different shape");
  }
  require(original_indices.empty() || original_indices.size() == frames.size(),
          ErrorCategory::kInputContract, source_id + ": original_indices length mismatch");
}

FrameSequence FrameSequence::select(std::span<const int> indices) const {
  FrameSequence out;
  out.source_id = source_id;
  for (int i : indices) {
    require(i >= 0 && i < count(), ErrorCategory::kInputContract,
            "frame index " + std::to_string(i) + " out of range");
    out.frames.push_back(frames[i]);
    out.original_indices.push_back(original_indices.empty() ? i : original_indices[i]);
  }
  return out;
}

namespace {

std::string trim(std::string s) {
  const auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && issp(s.back())) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && issp(s[i])) ++i;
  return s.substr(i);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& s, const std::string& where) {
  const std::string t = trim(s);
  double v = 0.0;
  auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  require(res.ec == std::errc() && res.ptr == t.data() + t.size() && !t.empty(),
          ErrorCategory::kInputContract, where + ": not a number: '" + s + "'");
  return v;
}

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  static const std::set<std::string> kExt = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff", ".ppm", ".pgm", ".webp"};
  return kExt.count(ext) > 0;
}

// "frame2" < "frame10".
bool natural_less(const std::string& a, const std::string& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (std::isdigit(static_cast<unsigned char>(a[i])) && std::isdigit(static_cast<unsigned char>(b[j]))) {
      std::size_t ie = i, je = j;
      while (ie < a.size() && std::isdigit(static_cast<unsigned char>(a[ie]))) ++ie;
      while (je < b.size() && std::isdigit(static_cast<unsigned char>(b[je]))) ++je;
      std::string na = a.substr(i, ie - i), nb = b.substr(j, je - j);
      na.erase(0, std::min(na.find_first_not_of('0'), na.size()));
      nb.erase(0, std::min(nb.find_first_not_of('0'), nb.size()));
      if (na.size() != nb.size()) return na.size() < nb.size();
      if (na != nb) return na < nb;
      i = ie;
      j = je;
    } else {
      if (a[i] != b[j]) return a[i] < b[j];
      ++i;
      ++j;
    }
  }
  return a.size() - i < b.size() - j || (a.size() - i == b.size() - j && a < b);
}

std::vector<fs::path> image_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
    return natural_less(a.filename().string(), b.filename().string());
  });
  return files;
}

Frame to_frame(const cv::Mat& bgr) {
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  cv::Mat f32;
  const double scale = rgb.depth() == CV_16U ? 1.0 / 65535.0 : 1.0 / 255.0;
  rgb.convertTo(f32, CV_32FC3, scale);
  Frame out(f32.rows, f32.cols);
  for (int y = 0; y < f32.rows; ++y) {
    const float* row = f32.ptr<float>(y);
    std::copy(row, row + f32.cols * 3, out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * f32.cols * 3);
  }
  for (float& v : out.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

cv::Mat to_mat(const Frame& f) {
  cv::Mat m(f.height, f.width, CV_32FC3);
  for (int y = 0; y < f.height; ++y) {
    std::copy(f.pixels.begin() + static_cast<std::ptrdiff_t>(y) * f.width * 3,
              f.pixels.begin() + static_cast<std::ptrdiff_t>(y + 1) * f.width * 3, m.ptr<float>(y));
  }
  return m;
}

void keep_frame(FrameSequence& seq, Frame frame, int decoded_index, const DecodeConfig& cfg) {
  if (decoded_index % cfg.stride != 0) return;
  if (cfg.max_frames > 0 && seq.count() >= cfg.max_frames) return;
  if (!seq.frames.empty() && (frame.height != seq.height() || frame.width != seq.width())) {
    fail(ErrorCategory::kIngestion, seq.source_id + ": frame " + std::to_string(decoded_index) +
                                        " has a different resolution");
  }
  seq.frames.push_back(std::move(frame));
  seq.original_indices.push_back(decoded_index);
}

std::uint64_t hash_bytes(std::uint64_t h, const std::string& bytes) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(static_cast<bool>(in), ErrorCategory::kIngestion, "cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t content_hash(const fs::path& path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  if (fs::is_directory(path)) {
    for (const auto& f : image_files(path)) {
      h = hash_bytes(h, f.filename().string());
      h = hash_bytes(h, read_bytes(f));
    }
  } else {
    h = hash_bytes(h, read_bytes(path));
  }
  return h;
}

MotionProfile profile_of(const FrameSequence& working) {
  if (working.count() < 2) return MotionProfile{std::vector<double>(working.count(), 0.0)};
  return motion_profile(working);
}

std::string hex(std::uint64_t v) {
  std::ostringstream ss;
  ss << std::hex << v;
  return ss.str();
}

}  // namespace

void DatasetManifest::validate() const {
  require(mos_low < mos_high, ErrorCategory::kInputContract, "manifest mos_range must satisfy low < high");
  std::set<std::string> ids;
  for (const auto& r : rows) {
    require(!r.video_id.empty(), ErrorCategory::kInputContract, "manifest row with empty video_id");
    require(ids.insert(r.video_id).second, ErrorCategory::kInputContract,
            "duplicate video_id '" + r.video_id + "'");
    require(r.mos >= mos_low && r.mos <= mos_high, ErrorCategory::kInputContract,
            "mos of '" + r.video_id + "' outside the declared range");
  }
}

fs::path DatasetManifest::resolve(const ManifestRow& row) const {
  const fs::path p(row.path);
  return p.is_absolute() ? p : base_dir / p;
}

DatasetManifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCategory::kIo, "cannot open manifest " + path.string());
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  bool header_seen = false;
  int line_no = 0;
  std::vector<std::string> columns;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string where = path.string() + ":" + std::to_string(line_no);
    if (trim(line).empty()) continue;
    if (line[0] == '#') {
      const std::string body = trim(line.substr(1));
      const auto colon = body.find(':');
      if (colon == std::string::npos) continue;
      const std::string key = trim(body.substr(0, colon));
      const std::string value = trim(body.substr(colon + 1));
      if (key == "dataset") {
        m.name = value;
      } else if (key == "mos_range") {
        const auto parts = split_csv(value);
        require(parts.size() == 2, ErrorCategory::kInputContract, where + ": mos_range needs low,high");
        m.mos_low = parse_double(parts[0], where);
        m.mos_high = parse_double(parts[1], where);
      }
      continue;
    }
    if (!header_seen) {
      columns = split_csv(line);
      for (auto& c : columns) c = trim(c);
      require(columns.size() >= 3 && columns[0] == "video_id" && columns[1] == "path" && columns[2] == "mos",
              ErrorCategory::kInputContract, where + ": header must start with video_id,path,mos");
      header_seen = true;
      continue;
    }
    const auto fields = split_csv(line);
    require(fields.size() == columns.size(), ErrorCategory::kInputContract,
            where + ": expected " + std::to_string(columns.size()) + " fields");
    ManifestRow r;
    r.video_id = trim(fields[0]);
    r.path = trim(fields[1]);
    r.mos = parse_double(fields[2], where);
    for (std::size_t c = 3; c < columns.size(); ++c) {
      if (trim(fields[c]).empty()) continue;
      if (columns[c] == "duration") r.duration = parse_double(fields[c], where);
      else if (columns[c] == "fps") r.fps = parse_double(fields[c], where);
    }
    m.rows.push_back(std::move(r));
  }
  require(header_seen, ErrorCategory::kInputContract, path.string() + ": missing header line");
  m.validate();
  return m;
}

void write_manifest(const DatasetManifest& m, const fs::path& path) {
  m.validate();
  const bool with_duration = std::any_of(m.rows.begin(), m.rows.end(), [](auto& r) { return r.duration.has_value(); });
  const bool with_fps = std::any_of(m.rows.begin(), m.rows.end(), [](auto& r) { return r.fps.has_value(); });
  std::ostringstream out;
  out << "# dataset: " << m.name << "\n";
  out << "# mos_range: " << format_double(m.mos_low) << "," << format_double(m.mos_high) << "\n";
  out << "video_id,path,mos" << (with_duration ? ",duration" : "") << (with_fps ? ",fps" : "") << "\n";
  for (const auto& r : m.rows) {
    out << csv_field(r.video_id) << "," << csv_field(r.path) << "," << format_double(r.mos);
    if (with_duration) out << "," << (r.duration ? format_double(*r.duration) : "");
    if (with_fps) out << "," << (r.fps ? format_double(*r.fps) : "");
    out << "\n";
  }
  write_file_atomic(path, out.str());
}

FrameSequence decode_frames(const fs::path& path, const DecodeConfig& config) {
  require(config.stride >= 1, ErrorCategory::kConfig, "decode stride must be >= 1");
  FrameSequence seq;
  seq.source_id = path.string();
  require(fs::exists(path), ErrorCategory::kIngestion, "no such file: " + path.string());
  try {
    if (fs::is_directory(path)) {
      const auto files = image_files(path);
      require(!files.empty(), ErrorCategory::kIngestion, "no image frames in " + path.string());
      for (std::size_t i = 0; i < files.size(); ++i) {
        if (static_cast<int>(i) % config.stride != 0) continue;
        const cv::Mat img = cv::imread(files[i].string(), cv::IMREAD_COLOR);
        require(!img.empty(), ErrorCategory::kIngestion, "unreadable frame " + files[i].string());
        keep_frame(seq, to_frame(img), static_cast<int>(i), config);
      }
    } else {
      cv::VideoCapture cap(path.string());
      require(cap.isOpened(), ErrorCategory::kIngestion, "cannot open video " + path.string());
      const double declared = cap.get(cv::CAP_PROP_FRAME_COUNT);
      cv::Mat img;
      int decoded = 0;
      while (cap.read(img)) {
        if (img.empty()) break;
        keep_frame(seq, to_frame(img), decoded, config);
        ++decoded;
      }
      require(decoded > 0, ErrorCategory::kIngestion, "no decodable frames in " + path.string());
      require(declared <= 0 || decoded >= static_cast<int>(declared), ErrorCategory::kIngestion,
              path.string() + ": truncated, decoded " + std::to_string(decoded) + " of " +
                  std::to_string(static_cast<int>(declared)) + " frames");
    }
  } catch (const cv::Exception& e) {
    fail(ErrorCategory::kIngestion, path.string() + ": " + e.what());
  }
  return seq;
}

FrameSequence resize_frames(const FrameSequence& frames, int height, int width) {
  require(height > 0 && width > 0, ErrorCategory::kInputContract, "resize target must be positive");
  FrameSequence out;
  out.source_id = frames.source_id;
  out.original_indices = frames.original_indices;
  for (const Frame& f : frames.frames) {
    if (f.height == height && f.width == width) {
      out.frames.push_back(f);
      continue;
    }
    const bool shrink = height <= f.height && width <= f.width;
    cv::Mat dst;
    cv::resize(to_mat(f), dst, cv::Size(width, height), 0, 0, shrink ? cv::INTER_AREA : cv::INTER_LINEAR);
    Frame g(height, width);
    for (int y = 0; y < height; ++y) {
      const float* row = dst.ptr<float>(y);
      std::copy(row, row + width * 3, g.pixels.begin() + static_cast<std::ptrdiff_t>(y) * width * 3);
    }
    for (float& v : g.pixels) v = std::clamp(v, 0.0f, 1.0f);
    out.frames.push_back(std::move(g));
  }
  return out;
}

FrameSequence limit_resolution(const FrameSequence& frames, int max_side) {
  const int h = frames.height(), w = frames.width();
  if (std::max(h, w) <= max_side) return frames;
  const double s = static_cast<double>(max_side) / std::max(h, w);
  return resize_frames(frames, std::max(1, static_cast<int>(std::lround(h * s))),
                       std::max(1, static_cast<int>(std::lround(w * s))));
}

LoadedDataset load_dataset(const DatasetManifest& manifest, const BackboneSpec& spec,
                           const LoadOptions& options) {
  manifest.validate();
  require(!manifest.rows.empty(), ErrorCategory::kInputContract, "manifest has no rows");
  LoadedDataset out;
  out.name = manifest.name;
  out.mos_low = manifest.mos_low;
  out.mos_high = manifest.mos_high;
  for (const auto& row : manifest.rows) {
    try {
      const fs::path path = manifest.resolve(row);
      VideoClip clip;
      clip.video_id = row.video_id;
      clip.mos = row.mos;

      fs::path cache_file;
      bool cached = false;
      if (options.cache_dir) {
        std::uint64_t key = content_hash(path);
        key = derive_seed(key, {static_cast<std::uint64_t>(spec.frame_height),
                                static_cast<std::uint64_t>(spec.frame_width),
                                static_cast<std::uint64_t>(options.decode.stride),
                                static_cast<std::uint64_t>(options.decode.max_frames),
                                static_cast<std::uint64_t>(options.working_max_side)});
        cache_file = *options.cache_dir / (hex(key) + ".qtns");
        if (fs::exists(cache_file)) {
          try {
            const TensorFile tf = read_tensor_file(cache_file);
            const int n = tf.meta.at("frames").get<int>();
            clip.frames.source_id = path.string();
            clip.frames.original_indices = tf.meta.at("indices").get<std::vector<int>>();
            for (int i = 0; i < n; ++i) {
              const auto* t = tf.find("frame." + std::to_string(i));
              require(t != nullptr, ErrorCategory::kCheckpoint, "cache entry incomplete");
              Frame f(static_cast<int>(t->value.rows()), static_cast<int>(t->value.cols() / 3));
              for (Eigen::Index y = 0; y < t->value.rows(); ++y) {
                for (Eigen::Index x = 0; x < t->value.cols(); ++x) {
                  f.pixels[static_cast<std::size_t>(y * t->value.cols() + x)] = static_cast<float>(t->value(y, x));
                }
              }
              clip.frames.frames.push_back(std::move(f));
            }
            const auto* p = tf.find("profile");
            require(p != nullptr, ErrorCategory::kCheckpoint, "cache entry incomplete");
            clip.profile.values.assign(p->value.data(), p->value.data() + p->value.size());
            cached = true;
          } catch (const Error&) {
            clip.frames = {};
            clip.profile = {};
          }
        }
      }

      if (!cached) {
        const FrameSequence decoded = decode_frames(path, options.decode);
        clip.profile = profile_of(limit_resolution(decoded, options.working_max_side));
        clip.frames = resize_frames(decoded, spec.frame_height, spec.frame_width);
        if (options.cache_dir) {
          std::vector<NamedTensor> tensors;
          for (int i = 0; i < clip.frames.count(); ++i) {
            const Frame& f = clip.frames.frames[i];
            ad::Matrix m(f.height, f.width * 3);
            for (int y = 0; y < f.height; ++y) {
              for (int x = 0; x < f.width * 3; ++x) m(y, x) = f.pixels[static_cast<std::size_t>(y) * f.width * 3 + x];
            }
            tensors.push_back({"frame." + std::to_string(i), std::move(m)});
          }
          tensors.push_back({"profile", Eigen::Map<const ad::Matrix>(clip.profile.values.data(), 1,
                                                                     clip.profile.frame_count())});
          write_tensor_file(cache_file,
                            {{"kind", "frame_cache"}, {"source", path.string()},
                             {"frames", clip.frames.count()}, {"indices", clip.frames.original_indices}},
                            tensors);
        }
      }
      clip.frames.source_id = row.video_id;
      out.clips.push_back(std::move(clip));
    } catch (const Error& e) {
      out.skipped.push_back(row.video_id + ": " + e.what());
      std::cerr << "warning: skipping " << row.video_id << ": " << e.what() << "\n";
    }
  }
  require(!out.clips.empty(), ErrorCategory::kInputContract, "no readable videos in manifest");
  return out;
}

FrameSequence clip_frames(const VideoClip& clip, const SamplingPlan& plan) {
  const FramePlan fp = plan_frames(clip.frames.count(), plan, &clip.profile);
  return clip.frames.select(fp.indices);
}

double laplacian_variance(const FrameSequence& frames) {
  require(frames.count() > 0 && frames.height() >= 3 && frames.width() >= 3, ErrorCategory::kInputContract,
          "laplacian_variance needs frames of at least 3x3");
  double total = 0.0;
  for (const Frame& f : frames.frames) {
    auto luma = [&](int y, int x) {
      return 0.299 * f.at(y, x, 0) + 0.587 * f.at(y, x, 1) + 0.114 * f.at(y, x, 2);
    };
    double sum = 0.0, sq = 0.0;
    int n = 0;
    for (int y = 1; y + 1 < f.height; ++y) {
      for (int x = 1; x + 1 < f.width; ++x) {
        const double l = 4 * luma(y, x) - luma(y - 1, x) - luma(y + 1, x) - luma(y, x - 1) - luma(y, x + 1);
        sum += l;
        sq += l * l;
        ++n;
      }
    }
    const double mean = sum / n;
    total += sq / n - mean * mean;
  }
  return total / frames.count();
}

}  // namespace qclip
