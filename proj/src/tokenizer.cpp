// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/tokenizer.hpp"

#include "visii/errors.hpp"

namespace visii {

namespace {

bool is_word_byte(unsigned char c) { return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '\''; }

bool is_space_byte(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

unsigned char lower(unsigned char c) { return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c + 32) : c; }

}  // namespace

WordTokenizer::WordTokenizer(int vocab_size, std::vector<std::string> lexicon)
    : m_vocab_size(vocab_size), m_lexicon(std::move(lexicon)) {
    VISII_CHECK(m_vocab_size > 3 + static_cast<int>(m_lexicon.size()), ErrorCode::invalid_argument,
                "vocabulary of ", m_vocab_size, " cannot hold ", m_lexicon.size(), " lexicon words plus buckets");
    for (std::size_t i = 0; i < m_lexicon.size(); ++i) {
        m_lexicon_ids.emplace(m_lexicon[i], 3 + static_cast<int>(i));
    }
}

std::uint64_t WordTokenizer::fnv1a(std::string_view word) {
    std::uint64_t hash = 0xcbf29ce484222325ull;
    for (unsigned char c : word) {
        hash ^= c;
        hash *= 0x100000001b3ull;
    }
    return hash;
}

std::vector<std::string> WordTokenizer::split_words(std::string_view text) {
    std::vector<std::string> words;
    std::string current;
    for (char raw : text) {
        const unsigned char c = lower(static_cast<unsigned char>(raw));
        if (is_word_byte(c)) {
            current.push_back(static_cast<char>(c));
            continue;
        }
        if (!current.empty()) {
            words.push_back(std::move(current));
            current.clear();
        }
        if (!is_space_byte(c)) {
            words.emplace_back(1, static_cast<char>(c));
        }
    }
    if (!current.empty()) {
        words.push_back(std::move(current));
    }
    return words;
}

std::vector<int> WordTokenizer::encode_content(std::string_view text) const {
    std::vector<int> ids;
    const auto first_bucket = 3 + static_cast<std::uint64_t>(m_lexicon.size());
    const auto buckets = static_cast<std::uint64_t>(m_vocab_size) - first_bucket;
    for (const auto& word : split_words(text)) {
        if (auto it = m_lexicon_ids.find(word); it != m_lexicon_ids.end()) {
            ids.push_back(it->second);
        } else {
            ids.push_back(static_cast<int>(first_bucket + fnv1a(word) % buckets));
        }
    }
    return ids;
}

std::vector<int> WordTokenizer::encode(std::string_view text) const {
    auto content = encode_content(text);
    VISII_CHECK(static_cast<int>(content.size()) <= kMaxContentTokens, ErrorCode::overflow, "text has ",
                content.size(), " content tokens, capacity is ", kMaxContentTokens);
    std::vector<int> ids;
    ids.reserve(kContextLength);
    ids.push_back(kStartOfText);
    ids.insert(ids.end(), content.begin(), content.end());
    ids.push_back(kEndOfText);
    ids.resize(kContextLength, kPad);
    return ids;
}

}  // namespace visii
