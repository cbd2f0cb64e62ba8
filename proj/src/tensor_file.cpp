// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/tensor_file.hpp"

#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "qclip/error.hpp"

static_assert(std::endian::native == std::endian::little, "tensor files assume little-endian hosts");

namespace qclip {

namespace {

constexpr char kMagic[8] = {'Q', 'C', 'L', 'I', 'P', 'T', 'N', 'S'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& at, const std::filesystem::path& path) {
  if (at + sizeof(T) > in.size()) {
    fail(ErrorCategory::kCheckpoint, "truncated tensor file: " + path.string());
  }
  T v;
  std::memcpy(&v, in.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

}  // namespace

const NamedTensor* TensorFile::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp" + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCategory::kIo, "cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) fail(ErrorCategory::kIo, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorCategory::kIo, "cannot rename into " + path.string() + ": " + ec.message());
}

void write_tensor_file(const std::filesystem::path& path, const nlohmann::json& meta,
                       std::span<const NamedTensor> tensors) {
  nlohmann::json header = meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : tensors) {
    header["tensors"].push_back({{"name", t.name},
                                 {"rows", t.value.rows()},
                                 {"cols", t.value.cols()},
                                 {"offset", offset}});
    offset += static_cast<std::uint64_t>(t.value.size()) * sizeof(double);
  }
  const std::string header_text = header.dump();

  std::string blob(kMagic, sizeof(kMagic));
  put<std::uint32_t>(blob, kTensorFileVersion);
  put<std::uint64_t>(blob, header_text.size());
  blob += header_text;
  for (const auto& t : tensors) {
    for (Eigen::Index r = 0; r < t.value.rows(); ++r) {
      for (Eigen::Index c = 0; c < t.value.cols(); ++c) put<double>(blob, t.value(r, c));
    }
  }
  write_file_atomic(path, blob);
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();

  if (data.size() < sizeof(kMagic) || std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCategory::kCheckpoint, "not a qclip tensor file: " + path.string());
  }
  std::size_t at = sizeof(kMagic);
  const auto version = get<std::uint32_t>(data, at, path);
  if (version != kTensorFileVersion) {
    fail(ErrorCategory::kCheckpoint, "unsupported tensor file version " + std::to_string(version) +
                                         " in " + path.string());
  }
  const auto header_len = get<std::uint64_t>(data, at, path);
  if (at + header_len > data.size()) {
    fail(ErrorCategory::kCheckpoint, "truncated tensor file header: " + path.string());
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(data.substr(at, header_len));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCategory::kCheckpoint, "corrupt tensor file header in " + path.string() + ": " + e.what());
  }
  const std::size_t payload = at + header_len;

  TensorFile file;
  for (const auto& entry : header.at("tensors")) {
    NamedTensor t;
    t.name = entry.at("name").get<std::string>();
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    std::size_t pos = payload + entry.at("offset").get<std::size_t>();
    t.value.resize(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) t.value(r, c) = get<double>(data, pos, path);
    }
    file.tensors.push_back(std::move(t));
  }
  header.erase("tensors");
  file.meta = std::move(header);
  return file;
}

}  // namespace qclip
