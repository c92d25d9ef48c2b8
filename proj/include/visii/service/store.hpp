// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "visii/instruction.hpp"
#include "visii/inversion.hpp"

namespace visii::service {

struct StoredInstruction {
    std::string id;
    int k = 0;
    int width = 0;
    InstructionMetadata metadata;

    nlohmann::json to_json() const;
};

/// On-disk store. The directory is the source of truth: listing rescans
/// instructions/*.visii, so a restarted server sees everything written before.
///
///   <root>/instructions/<id>.visii (+ .visii.json sidecar)
///   <root>/results/<job>.png (+ .png.json sidecar)
class Store {
public:
    explicit Store(std::filesystem::path root);

    const std::filesystem::path& root() const { return m_root; }

    /// Saves under a fresh id, with the loss history CSV next to it.
    std::string put_instruction(const InstructionEmbedding& instruction, const std::vector<LossBreakdown>& history = {});
    std::optional<std::filesystem::path> instruction_path(const std::string& id) const;
    InstructionEmbedding load_instruction(const std::string& id) const;
    std::vector<StoredInstruction> list_instructions() const;

    std::filesystem::path result_path(const std::string& job_id) const;

    /// Ids are UUIDs; anything else is refused before touching the filesystem.
    static bool valid_id(const std::string& id);

private:
    std::filesystem::path m_root;
    std::filesystem::path m_instructions;
    std::filesystem::path m_results;
    mutable std::mutex m_mutex;
};

}  // namespace visii::service
