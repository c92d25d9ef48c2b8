// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/errors.hpp"

namespace visii {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::out_of_range: return "out_of_range";
    case ErrorCode::overflow: return "overflow";
    case ErrorCode::degenerate: return "degenerate";
    case ErrorCode::numerical: return "numerical";
    case ErrorCode::backend: return "backend";
    case ErrorCode::captioner_unavailable: return "captioner_unavailable";
    case ErrorCode::io: return "io";
    case ErrorCode::format: return "format";
    case ErrorCode::version: return "version";
    case ErrorCode::checksum: return "checksum";
    case ErrorCode::truncated: return "truncated";
    }
    return "unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(message), m_code(code) {}

}  // namespace visii
