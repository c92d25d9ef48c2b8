// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/instruction.hpp"

#include "visii/backend.hpp"
#include "visii/captioner.hpp"
#include "visii/errors.hpp"

namespace visii {

InstructionEmbedding::InstructionEmbedding(EmbeddingRows rows, int k, InstructionMetadata metadata)
    : InstructionEmbedding(std::move(rows), k, 0, true, std::move(metadata)) {}

InstructionEmbedding InstructionEmbedding::frozen(EmbeddingRows rows, int k, int extra_tokens,
                                                  InstructionMetadata metadata) {
    return InstructionEmbedding(std::move(rows), k, extra_tokens, false, std::move(metadata));
}

InstructionEmbedding::InstructionEmbedding(EmbeddingRows rows, int k, int extra, bool trainable,
                                           InstructionMetadata metadata)
    : m_rows(std::move(rows)), m_k(k), m_extra(extra), m_trainable(trainable), m_metadata(std::move(metadata)) {
    VISII_CHECK(m_rows.rows() == kContextLength && m_rows.cols() > 0, ErrorCode::shape_mismatch,
                "instruction must have ", kContextLength, " rows, got ", m_rows.rows(), "x", m_rows.cols());
    VISII_CHECK(m_extra >= 0 && m_k >= (trainable ? 1 : 0) && m_k + m_extra <= kMaxContentTokens,
                ErrorCode::out_of_range, "instruction layout k=", m_k, " extra=", m_extra, " exceeds capacity ",
                kMaxContentTokens);
}

InstructionEmbedding init_from_text(const Backend& backend, std::string_view text, std::optional<int> k) {
    auto content = backend.tokenize_content(text);
    VISII_CHECK(!content.empty(), ErrorCode::invalid_argument, "initialization text is empty");
    int count = static_cast<int>(content.size());
    if (k) {
        VISII_CHECK(*k >= 1 && *k <= kMaxContentTokens, ErrorCode::out_of_range, "k=", *k, " outside [1, ",
                    kMaxContentTokens, "]");
        count = *k;
        // Keep the first k tokens; fill a short caption with pad rows.
        content.resize(static_cast<std::size_t>(count), backend.pad_token());
    } else {
        VISII_CHECK(count <= kMaxContentTokens, ErrorCode::overflow, "text has ", count,
                    " content tokens, capacity is ", kMaxContentTokens);
    }
    std::vector<int> ids;
    ids.reserve(kContextLength);
    ids.push_back(backend.start_token());
    ids.insert(ids.end(), content.begin(), content.end());
    ids.push_back(backend.end_token());
    ids.resize(kContextLength, backend.pad_token());

    InstructionMetadata metadata;
    metadata.model_id = backend.config().model_id;
    return InstructionEmbedding(backend.token_embeddings(ids), count, std::move(metadata));
}

InstructionEmbedding init_from_captioner(const Backend& backend, const Image& after, Captioner& captioner, int k) {
    const std::string caption = captioner.caption(after);
    const auto content = backend.tokenize_content(caption);
    VISII_CHECK(!content.empty(), ErrorCode::captioner_unavailable, "captioner returned empty text");
    VISII_CHECK(static_cast<int>(content.size()) <= kMaxContentTokens, ErrorCode::captioner_unavailable,
                "captioner returned ", content.size(), " content tokens, capacity is ", kMaxContentTokens);
    return init_from_text(backend, caption, k);
}

InstructionEmbedding concat_user_text(const Backend& backend, const InstructionEmbedding& instruction,
                                      std::string_view extra_text) {
    VISII_CHECK(instruction.width() == backend.config().text_width, ErrorCode::shape_mismatch, "instruction width ",
                instruction.width(), " does not match backend width ", backend.config().text_width);
    const auto extra = backend.tokenize_content(extra_text);
    const int k = instruction.k();
    const int m = static_cast<int>(extra.size());
    VISII_CHECK(k + m <= kMaxContentTokens, ErrorCode::overflow, "learned tokens (", k, ") plus extra text (", m,
                ") exceed capacity ", kMaxContentTokens);

    std::vector<int> tail(extra.begin(), extra.end());
    tail.push_back(backend.end_token());
    tail.resize(static_cast<std::size_t>(kContextLength - 1 - k), backend.pad_token());

    EmbeddingRows rows(kContextLength, instruction.width());
    rows.topRows(1 + k) = instruction.rows().topRows(1 + k);
    rows.bottomRows(kContextLength - 1 - k) = backend.token_embeddings(tail);
    return InstructionEmbedding::frozen(std::move(rows), k, m, instruction.metadata());
}

}  // namespace visii
