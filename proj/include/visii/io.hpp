// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace visii {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`, so readers see
// either the old or the new content.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_file_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace visii
