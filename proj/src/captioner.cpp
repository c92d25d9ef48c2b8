// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/captioner.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include <sys/wait.h>
#include <unistd.h>

#include "visii/backend.hpp"
#include "visii/errors.hpp"

namespace visii {

RetrievalCaptioner::RetrievalCaptioner(const Backend& backend, int words) : m_backend(backend), m_words(words) {
    VISII_CHECK(words >= 1, ErrorCode::invalid_argument, "retrieval captioner needs at least one word");
}

std::string RetrievalCaptioner::caption(const Image& after) {
    const auto vocabulary = m_backend.caption_vocabulary();
    VISII_CHECK(!vocabulary.empty(), ErrorCode::captioner_unavailable, "backend '", m_backend.config().model_id,
                "' has no caption vocabulary");
    const auto image = m_backend.embed_image(after);
    std::vector<double> score(vocabulary.size());
    for (std::size_t i = 0; i < vocabulary.size(); ++i) {
        const auto text = m_backend.embed_instruction_text(init_from_text(m_backend, vocabulary[i]));
        score[i] = cosine_similarity(image.values, text.values);
    }
    std::vector<std::size_t> order(vocabulary.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });

    std::string text = "a photo that looks";
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(m_words), order.size());
    for (std::size_t i = 0; i < n; ++i) {
        text += (i == 0 ? " " : " and ") + vocabulary[order[i]];
    }
    return text;
}

std::string CommandCaptioner::caption(const Image& after) {
    static std::atomic<unsigned> counter{0};
    const auto path = std::filesystem::temp_directory_path() /
                      ("visii-caption-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + ".png");
    save_png(after, path);
    const std::string command = m_command + " '" + path.string() + "'";

    std::string output;
    FILE* pipe = ::popen(command.c_str(), "r");
    if (pipe == nullptr) {
        std::filesystem::remove(path);
        fail(ErrorCode::captioner_unavailable, "cannot run captioner command '", m_command, "'");
    }
    char buffer[512];
    while (std::fgets(buffer, sizeof(buffer), pipe) != nullptr) {
        output += buffer;
    }
    const int status = ::pclose(pipe);
    std::error_code ignored;
    std::filesystem::remove(path, ignored);

    VISII_CHECK(status != -1 && WIFEXITED(status) && WEXITSTATUS(status) == 0, ErrorCode::captioner_unavailable,
                "captioner command '", m_command, "' failed");
    output = output.substr(0, output.find('\n'));
    VISII_CHECK(!output.empty(), ErrorCode::captioner_unavailable, "captioner command '", m_command,
                "' printed nothing");
    return output;
}

}  // namespace visii
