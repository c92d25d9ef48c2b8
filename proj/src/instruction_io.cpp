// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/instruction_io.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include <zlib.h>

#include "visii/errors.hpp"
#include "visii/io.hpp"

namespace visii {

namespace {

constexpr char kMagic[6] = {'V', 'I', 'S', 'I', 'I', '\0'};
constexpr std::uint32_t kMaxWidth = 1u << 16;

class Writer {
public:
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        m_out.insert(m_out.end(), p, p + n);
    }
    template <typename T>
    void le(T value) {
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            m_out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
        }
    }
    std::vector<std::uint8_t>& out() { return m_out; }

private:
    std::vector<std::uint8_t> m_out;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : m_bytes(bytes) {}

    void need(std::size_t n, const char* what) const {
        VISII_CHECK(m_pos + n <= m_bytes.size(), ErrorCode::truncated, "instruction file truncated in ", what);
    }
    template <typename T>
    T le(const char* what) {
        need(sizeof(T), what);
        std::uint64_t value = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) {
            value |= static_cast<std::uint64_t>(m_bytes[m_pos + i]) << (8 * i);
        }
        m_pos += sizeof(T);
        return static_cast<T>(value);
    }
    std::span<const std::uint8_t> take(std::size_t n, const char* what) {
        need(n, what);
        auto out = m_bytes.subspan(m_pos, n);
        m_pos += n;
        return out;
    }
    std::size_t position() const { return m_pos; }

private:
    std::span<const std::uint8_t> m_bytes;
    std::size_t m_pos = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    return static_cast<std::uint32_t>(::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size())));
}

}  // namespace

std::vector<std::uint8_t> serialize_instruction(const InstructionEmbedding& instruction) {
    VISII_CHECK(instruction.extra_tokens() == 0 && instruction.k() >= 1, ErrorCode::invalid_argument,
                "only learned instructions can be saved; hybrid and null embeddings are inference-only");
    const auto& model_id = instruction.metadata().model_id;
    VISII_CHECK(model_id.size() <= std::numeric_limits<std::uint16_t>::max(), ErrorCode::invalid_argument,
                "model id too long");

    Writer w;
    w.bytes(kMagic, sizeof(kMagic));
    w.le<std::uint16_t>(kInstructionFormatVersion);
    w.le<std::uint16_t>(static_cast<std::uint16_t>(instruction.k()));
    w.le<std::uint32_t>(static_cast<std::uint32_t>(instruction.width()));
    w.le<std::uint16_t>(static_cast<std::uint16_t>(model_id.size()));
    w.bytes(model_id.data(), model_id.size());
    w.le<std::uint64_t>(instruction.metadata().base_seed);
    const auto& rows = instruction.rows();
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        for (Eigen::Index c = 0; c < rows.cols(); ++c) {
            w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(rows(r, c)));
        }
    }
    w.le<std::uint32_t>(crc32_of(w.out()));
    return std::move(w.out());
}

InstructionEmbedding deserialize_instruction(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    const auto magic = r.take(sizeof(kMagic), "magic");
    VISII_CHECK(std::memcmp(magic.data(), kMagic, sizeof(kMagic)) == 0, ErrorCode::format,
                "not a .visii file (bad magic)");
    const auto version = r.le<std::uint16_t>("version");
    VISII_CHECK(version == kInstructionFormatVersion, ErrorCode::version, "unsupported .visii version ", version,
                ", expected ", kInstructionFormatVersion);
    const int k = r.le<std::uint16_t>("header");
    const auto width = r.le<std::uint32_t>("header");
    VISII_CHECK(k >= 1 && k <= kMaxContentTokens, ErrorCode::format, "token count ", k, " outside [1, ",
                kMaxContentTokens, "]");
    VISII_CHECK(width >= 1 && width <= kMaxWidth, ErrorCode::format, "embedding width ", width, " out of range");
    const auto id_length = r.le<std::uint16_t>("header");
    const auto id_bytes = r.take(id_length, "model id");
    const auto seed = r.le<std::uint64_t>("header");
    const std::size_t count = static_cast<std::size_t>(kContextLength) * width;
    const auto payload = r.take(count * 4, "embedding rows");
    const std::size_t body = r.position();
    const auto stored_crc = r.le<std::uint32_t>("checksum");
    VISII_CHECK(r.position() == bytes.size(), ErrorCode::format, "unexpected ", bytes.size() - r.position(),
                " trailing bytes after checksum");
    VISII_CHECK(stored_crc == crc32_of(bytes.first(body)), ErrorCode::checksum, ".visii checksum mismatch");

    EmbeddingRows rows(kContextLength, static_cast<Eigen::Index>(width));
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t word = 0;
        for (int b = 0; b < 4; ++b) {
            word |= static_cast<std::uint32_t>(payload[4 * i + b]) << (8 * b);
        }
        rows(static_cast<Eigen::Index>(i / width), static_cast<Eigen::Index>(i % width)) =
            std::bit_cast<float>(word);
    }
    InstructionMetadata metadata;
    metadata.model_id.assign(reinterpret_cast<const char*>(id_bytes.data()), id_bytes.size());
    metadata.base_seed = seed;
    return InstructionEmbedding(std::move(rows), k, std::move(metadata));
}

nlohmann::json instruction_sidecar(const InstructionMetadata& metadata) {
    nlohmann::json streams = nlohmann::json::object();
    for (const auto& [t, stream] : metadata.noise_streams) {
        streams[std::to_string(t)] = stream;
    }
    return {
        {"model_id", metadata.model_id},
        {"base_seed", metadata.base_seed},
        {"config_hash", metadata.config_hash},
        {"created_at", metadata.created_at},
        {"noise_streams", streams},
    };
}

void apply_instruction_sidecar(const nlohmann::json& sidecar, InstructionMetadata& metadata) {
    try {
        VISII_CHECK(sidecar.is_object(), ErrorCode::format, "instruction sidecar must be an object");
        metadata.config_hash = sidecar.value("config_hash", std::string());
        metadata.created_at = sidecar.value("created_at", std::string());
        metadata.noise_streams.clear();
        if (auto it = sidecar.find("noise_streams"); it != sidecar.end()) {
            for (const auto& [key, value] : it->items()) {
                metadata.noise_streams[std::stoi(key)] = value.get<std::uint64_t>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::format, "malformed instruction sidecar: ", e.what());
    } catch (const std::logic_error& e) {
        fail(ErrorCode::format, "malformed instruction sidecar: ", e.what());
    }
}

std::filesystem::path sidecar_path(const std::filesystem::path& visii_path) {
    auto path = visii_path;
    path += ".json";
    return path;
}

void save_instruction(const InstructionEmbedding& instruction, const std::filesystem::path& path) {
    const auto bytes = serialize_instruction(instruction);
    write_file_atomic(sidecar_path(path), instruction_sidecar(instruction.metadata()).dump(2) + "\n");
    write_file_atomic(path, bytes);
}

InstructionEmbedding load_instruction(const std::filesystem::path& path) {
    auto instruction = deserialize_instruction(read_file(path));
    const auto side = sidecar_path(path);
    if (std::filesystem::exists(side)) {
        const auto text = read_file(side);
        nlohmann::json json;
        try {
            json = nlohmann::json::parse(text.begin(), text.end());
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorCode::format, "instruction sidecar ", side.string(), ": ", e.what());
        }
        apply_instruction_sidecar(json, instruction.metadata());
    }
    return instruction;
}

}  // namespace visii
