// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"

#include "visii/instruction.hpp"

namespace visii {

/// ".visii" layout, little-endian throughout:
///
///   "VISII\0"  u16 version  u16 k  u32 D  u16 n  model_id[n]  u64 base_seed
///   f32[77 * D] rows  u32 crc32(everything before it)
///
/// Config hash, creation time and recorded noise streams are not part of the
/// binary; they live in a JSON sidecar next to it, so the binary depends only
/// on what was learned.
inline constexpr std::uint16_t kInstructionFormatVersion = 1;

std::vector<std::uint8_t> serialize_instruction(const InstructionEmbedding& instruction);

/// Throws `format`, `version`, `truncated` or `checksum`; never returns a partial object.
InstructionEmbedding deserialize_instruction(std::span<const std::uint8_t> bytes);

nlohmann::json instruction_sidecar(const InstructionMetadata& metadata);
void apply_instruction_sidecar(const nlohmann::json& sidecar, InstructionMetadata& metadata);

std::filesystem::path sidecar_path(const std::filesystem::path& visii_path);

/// Writes the binary and its sidecar atomically. Hybrid embeddings are inference-only and refused.
void save_instruction(const InstructionEmbedding& instruction, const std::filesystem::path& path);

/// Reads the binary and, when present, its sidecar.
InstructionEmbedding load_instruction(const std::filesystem::path& path);

}  // namespace visii
