// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary container of named float64 tensors.
//
//   bytes 0..7   magic "QCLIPTNS"
//   u32          container version (currently 1)
//   u64          header length L
//   L bytes      UTF-8 JSON header: caller metadata plus
//                "tensors": [{"name", "rows", "cols", "offset"}]
//   payload      little-endian float64, row-major, offsets relative to the
//                start of the payload
//
// Writes go to a temporary file that is renamed into place.

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "qclip/autodiff.hpp"

namespace qclip {

inline constexpr std::uint32_t kTensorFileVersion = 1;

struct NamedTensor {
  std::string name;
  ad::Matrix value;
};

struct TensorFile {
  nlohmann::json meta;  // header without the "tensors" index
  std::vector<NamedTensor> tensors;

  const NamedTensor* find(const std::string& name) const;
};

void write_tensor_file(const std::filesystem::path& path, const nlohmann::json& meta,
                       std::span<const NamedTensor> tensors);

// Throws kCheckpoint on bad magic/version/truncation, kIo when unreadable.
TensorFile read_tensor_file(const std::filesystem::path& path);

// Atomically replaces `path` with `contents` (write temp, then rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace qclip
