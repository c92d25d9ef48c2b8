// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "visii/tokenizer.hpp"

namespace visii {

class Backend;
class Captioner;
struct Image;

/// kContextLength x D matrix of text-encoder input embeddings.
using EmbeddingRows = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct InstructionMetadata {
    std::string model_id;
    std::uint64_t base_seed = 0;
    std::string config_hash;
    std::string created_at;
    /// Timestep -> noise stream used during training. Empty unless the
    /// instruction was trained with fresh noise per step; see NoisePlan.
    std::map<int, std::uint64_t> noise_streams;

    bool operator==(const InstructionMetadata&) const = default;
};

/// A soft text instruction: [SOT, <ins> x k, (extra x m), EOT, PAD...].
///
/// Only rows [1, 1 + k) are trainable, and only on embeddings built for
/// training. Hybrid embeddings (learned rows followed by user text) are for
/// inference and expose no trainable slice.
class InstructionEmbedding {
public:
    InstructionEmbedding(EmbeddingRows rows, int k, InstructionMetadata metadata = {});

    /// Inference-only embedding whose end-of-text sits after `k + extra_tokens` content rows.
    static InstructionEmbedding frozen(EmbeddingRows rows, int k, int extra_tokens, InstructionMetadata metadata);

    const EmbeddingRows& rows() const { return m_rows; }
    int width() const { return static_cast<int>(m_rows.cols()); }

    int k() const { return m_k; }
    int extra_tokens() const { return m_extra; }
    int eot_index() const { return 1 + m_k + m_extra; }

    bool trainable() const { return m_trainable; }
    int trainable_lo() const { return 1; }
    int trainable_hi() const { return m_trainable ? 1 + m_k : 1; }

    /// Mutable view over the trainable slice only; the frozen rows are not reachable through it.
    auto trainable_rows() { return m_rows.middleRows(trainable_lo(), trainable_hi() - trainable_lo()); }

    InstructionMetadata& metadata() { return m_metadata; }
    const InstructionMetadata& metadata() const { return m_metadata; }

private:
    InstructionEmbedding(EmbeddingRows rows, int k, int extra, bool trainable, InstructionMetadata metadata);

    EmbeddingRows m_rows;
    int m_k = 0;
    int m_extra = 0;
    bool m_trainable = false;
    InstructionMetadata m_metadata;
};

/// Embeds `text`; k defaults to the number of content tokens. With an
/// explicit k the content is truncated to its first k tokens or filled with
/// pad embeddings up to k.
InstructionEmbedding init_from_text(const Backend& backend, std::string_view text, std::optional<int> k = {});

inline constexpr int kDefaultCaptionTokens = 10;

InstructionEmbedding init_from_captioner(const Backend& backend, const Image& after, Captioner& captioner,
                                         int k = kDefaultCaptionTokens);

/// [SOT, learned rows, extra-text rows, EOT, PAD...]. The learned rows are
/// copied bit-exactly; the result has no trainable slice.
InstructionEmbedding concat_user_text(const Backend& backend, const InstructionEmbedding& instruction,
                                      std::string_view extra_text);

}  // namespace visii
