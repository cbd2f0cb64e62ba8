// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qclip {

enum class ErrorCategory {
  kInputContract,    // tensor / frame / token shapes disagree with the backbone
  kNumericContract,  // zero norms, undefined correlations
  kConfig,           // bad config keys or values
  kIo,               // filesystem failures
  kIngestion,        // unreadable or corrupt media
  kCheckpoint,       // version or shape mismatch on load
  kAudit,            // trainable-set audit failure
};

std::string_view category_name(ErrorCategory c);

// Process exit code used by the CLI for each category.
int exit_code(ErrorCategory c);

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& message) {
  throw Error(c, message);
}

inline void require(bool cond, ErrorCategory c, const std::string& message) {
  if (!cond) fail(c, message);
}

}  // namespace qclip
