// Copyright 2026 The qclip Authors
// SPDX-License-Identifier: Apache-2.0

#include "qclip/error.hpp"

namespace qclip {

std::string_view category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kInputContract: return "input_contract";
    case ErrorCategory::kNumericContract: return "numeric_contract";
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kIngestion: return "ingestion";
    case ErrorCategory::kCheckpoint: return "checkpoint";
    case ErrorCategory::kAudit: return "audit";
  }
  return "unknown";
}

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kInputContract: return 3;
    case ErrorCategory::kNumericContract: return 4;
    case ErrorCategory::kConfig: return 2;
    case ErrorCategory::kIo: return 5;
    case ErrorCategory::kIngestion: return 6;
    case ErrorCategory::kCheckpoint: return 7;
    case ErrorCategory::kAudit: return 8;
  }
  return 1;
}

}  // namespace qclip
