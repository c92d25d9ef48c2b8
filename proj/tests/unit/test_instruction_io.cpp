// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "support.hpp"
#include "visii/errors.hpp"
#include "visii/instruction_io.hpp"

namespace visii {
namespace {

using test::rows_bitwise_equal;

InstructionEmbedding random_instruction(std::mt19937& rng, int k, int width) {
    std::normal_distribution<float> dist;
    EmbeddingRows rows(77, width);
    for (Eigen::Index i = 0; i < rows.size(); ++i) {
        rows.data()[i] = dist(rng);
    }
    InstructionMetadata metadata;
    metadata.model_id = "visii-mini-v1";
    metadata.base_seed = rng();
    return InstructionEmbedding(rows, k, metadata);
}

ErrorCode load_error(std::span<const std::uint8_t> bytes) {
    try {
        deserialize_instruction(bytes);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "expected an error";
    return ErrorCode::invalid_argument;
}

// Byte offsets of the fixed header fields.
constexpr std::size_t kVersionOffset = 6;
constexpr std::size_t kKOffset = 8;
constexpr std::size_t kWidthOffset = 10;

TEST(InstructionIo, HeaderLayout) {
    std::mt19937 rng(1);
    const auto instruction = random_instruction(rng, 10, 32);
    const auto bytes = serialize_instruction(instruction);
    EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 6), std::string("VISII\0", 6));
    EXPECT_EQ(bytes[kVersionOffset] | bytes[kVersionOffset + 1] << 8, 1);
    EXPECT_EQ(bytes[kKOffset] | bytes[kKOffset + 1] << 8, 10);
    EXPECT_EQ(bytes[kWidthOffset] | bytes[kWidthOffset + 1] << 8, 32);
    // magic, version, k, D, id length + id, seed, payload, crc
    EXPECT_EQ(bytes.size(), 6u + 2 + 2 + 4 + 2 + 13 + 8 + 77u * 32 * 4 + 4);
}

TEST(InstructionIo, RoundTripIsBitExact) {
    std::mt19937 rng(2);
    const auto instruction = random_instruction(rng, 7, 32);
    const auto loaded = deserialize_instruction(serialize_instruction(instruction));
    EXPECT_TRUE(rows_bitwise_equal(loaded.rows(), instruction.rows()));
    EXPECT_EQ(loaded.k(), 7);
    EXPECT_EQ(loaded.metadata().model_id, instruction.metadata().model_id);
    EXPECT_EQ(loaded.metadata().base_seed, instruction.metadata().base_seed);
    EXPECT_EQ(serialize_instruction(loaded), serialize_instruction(instruction));
}

TEST(InstructionIo, CorruptPayloadFailsChecksum) {
    std::mt19937 rng(3);
    auto bytes = serialize_instruction(random_instruction(rng, 10, 32));
    bytes[bytes.size() / 2] ^= 0x10;
    EXPECT_EQ(load_error(bytes), ErrorCode::checksum);
}

TEST(InstructionIo, UnknownVersionIsRejected) {
    std::mt19937 rng(4);
    auto bytes = serialize_instruction(random_instruction(rng, 10, 32));
    bytes[kVersionOffset] = 2;
    EXPECT_EQ(load_error(bytes), ErrorCode::version);
}

TEST(InstructionIo, TruncationBadMagicAndTrailingBytes) {
    std::mt19937 rng(5);
    const auto good = serialize_instruction(random_instruction(rng, 10, 8));
    EXPECT_EQ(load_error(std::span(good).first(good.size() - 1)), ErrorCode::truncated);
    EXPECT_EQ(load_error(std::span(good).first(3)), ErrorCode::truncated);
    auto bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_EQ(load_error(bad_magic), ErrorCode::format);
    auto trailing = good;
    trailing.push_back(0);
    EXPECT_EQ(load_error(trailing), ErrorCode::format);
}

TEST(InstructionIo, HybridEmbeddingsAreNotSaved) {
    std::mt19937 rng(6);
    const auto instruction = random_instruction(rng, 10, 32);
    const auto frozen = InstructionEmbedding::frozen(instruction.rows(), 10, 2, {});
    EXPECT_THROW(serialize_instruction(frozen), Error);
}

TEST(InstructionIo, SaveLoadWithSidecar) {
    test::TempDir dir;
    std::mt19937 rng(7);
    auto instruction = random_instruction(rng, 10, 32);
    instruction.metadata().config_hash = "00112233aabbccdd";
    instruction.metadata().created_at = "2026-01-02T03:04:05Z";
    instruction.metadata().noise_streams = {{3, 9}, {500, 12}};
    const auto path = dir / "sepia.visii";
    save_instruction(instruction, path);
    EXPECT_TRUE(std::filesystem::exists(sidecar_path(path)));
    EXPECT_EQ(sidecar_path(path).filename(), "sepia.visii.json");

    const auto loaded = load_instruction(path);
    EXPECT_TRUE(rows_bitwise_equal(loaded.rows(), instruction.rows()));
    EXPECT_EQ(loaded.metadata(), instruction.metadata());

    // Only the two artifacts remain; temp files were renamed into place.
    int files = 0;
    for ([[maybe_unused]] const auto& entry : std::filesystem::directory_iterator(dir.path())) {
        ++files;
    }
    EXPECT_EQ(files, 2);

    std::filesystem::remove(sidecar_path(path));
    const auto bare = load_instruction(path);
    EXPECT_TRUE(bare.metadata().noise_streams.empty());
    EXPECT_EQ(bare.metadata().base_seed, instruction.metadata().base_seed);
}

TEST(InstructionIo, MissingFileIsAnIoError) {
    try {
        load_instruction("/nonexistent/x.visii");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::io);
    }
}

TEST(InstructionIo, SaveOverwritesInPlace) {
    test::TempDir dir;
    std::mt19937 rng(8);
    const auto path = dir / "a.visii";
    save_instruction(random_instruction(rng, 3, 8), path);
    const auto second = random_instruction(rng, 4, 8);
    save_instruction(second, path);
    EXPECT_TRUE(rows_bitwise_equal(load_instruction(path).rows(), second.rows()));
}

}  // namespace
}  // namespace visii
