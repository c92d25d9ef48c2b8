// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/service/store.hpp"

#include <algorithm>

#include "visii/errors.hpp"
#include "visii/instruction_io.hpp"
#include "visii/service/job_queue.hpp"

namespace visii::service {

nlohmann::json StoredInstruction::to_json() const {
    return {
        {"id", id},
        {"k", k},
        {"width", width},
        {"model_id", metadata.model_id},
        {"base_seed", metadata.base_seed},
        {"config_hash", metadata.config_hash},
        {"created_at", metadata.created_at},
        {"url", "/instructions/" + id},
    };
}

Store::Store(std::filesystem::path root)
    : m_root(std::move(root)), m_instructions(m_root / "instructions"), m_results(m_root / "results") {
    std::filesystem::create_directories(m_instructions);
    std::filesystem::create_directories(m_results);
}

bool Store::valid_id(const std::string& id) {
    if (id.size() != 36) {
        return false;
    }
    for (std::size_t i = 0; i < id.size(); ++i) {
        const char c = id[i];
        const bool dash = i == 8 || i == 13 || i == 18 || i == 23;
        if (dash ? c != '-' : !((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) {
            return false;
        }
    }
    return true;
}

std::string Store::put_instruction(const InstructionEmbedding& instruction,
                                   const std::vector<LossBreakdown>& history) {
    const auto id = make_uuid();
    std::lock_guard lock(m_mutex);
    checkpoint(instruction, history, m_instructions / (id + ".visii"));
    return id;
}

std::optional<std::filesystem::path> Store::instruction_path(const std::string& id) const {
    if (!valid_id(id)) {
        return std::nullopt;
    }
    auto path = m_instructions / (id + ".visii");
    if (!std::filesystem::exists(path)) {
        return std::nullopt;
    }
    return path;
}

InstructionEmbedding Store::load_instruction(const std::string& id) const {
    const auto path = instruction_path(id);
    VISII_CHECK(path.has_value(), ErrorCode::io, "unknown instruction '", id, "'");
    std::lock_guard lock(m_mutex);
    return visii::load_instruction(*path);
}

std::vector<StoredInstruction> Store::list_instructions() const {
    std::vector<StoredInstruction> out;
    std::lock_guard lock(m_mutex);
    for (const auto& entry : std::filesystem::directory_iterator(m_instructions)) {
        const auto& path = entry.path();
        if (path.extension() != ".visii" || !valid_id(path.stem().string())) {
            continue;
        }
        try {
            const auto instruction = visii::load_instruction(path);
            out.push_back({path.stem().string(), instruction.k(), instruction.width(), instruction.metadata()});
        } catch (const Error&) {
            // A damaged file is skipped rather than hiding the rest of the store.
        }
    }
    std::sort(out.begin(), out.end(), [](const StoredInstruction& a, const StoredInstruction& b) {
        return a.metadata.created_at != b.metadata.created_at ? a.metadata.created_at < b.metadata.created_at
                                                              : a.id < b.id;
    });
    return out;
}

std::filesystem::path Store::result_path(const std::string& job_id) const { return m_results / (job_id + ".png"); }

}  // namespace visii::service
