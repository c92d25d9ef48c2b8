// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace visii {

inline constexpr int kContextLength = 77;
inline constexpr int kMaxContentTokens = kContextLength - 2;

/// Word-level tokenizer with a fixed lexicon and hashed fallback buckets.
///
/// Text is ASCII-lowercased and split into runs of [a-z0-9'] and single
/// non-space bytes. Lexicon words map to ids 3..3+L-1; any other word lands
/// in one of the remaining buckets by FNV-1a 64. Ids 0, 1, 2 are pad,
/// start-of-text and end-of-text.
class WordTokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kStartOfText = 1;
    static constexpr int kEndOfText = 2;

    WordTokenizer(int vocab_size, std::vector<std::string> lexicon);

    int vocab_size() const { return m_vocab_size; }
    const std::vector<std::string>& lexicon() const { return m_lexicon; }

    /// Content ids only, no special tokens, no length cap.
    std::vector<int> encode_content(std::string_view text) const;

    /// [SOT, content..., EOT, PAD...] of length kContextLength; throws
    /// `overflow` when content exceeds kMaxContentTokens.
    std::vector<int> encode(std::string_view text) const;

    static std::vector<std::string> split_words(std::string_view text);
    static std::uint64_t fnv1a(std::string_view word);

private:
    int m_vocab_size;
    std::vector<std::string> m_lexicon;
    std::unordered_map<std::string, int> m_lexicon_ids;
};

}  // namespace visii
