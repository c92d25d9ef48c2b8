// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "visii/image.hpp"

namespace visii {

class Backend;

/// Produces an initialization caption for an "after" image. Implementations
/// throw Error(captioner_unavailable) when they cannot answer; callers then
/// fall back to user text.
class Captioner {
public:
    virtual ~Captioner() = default;
    virtual std::string caption(const Image& after) = 0;
};

/// Always returns the same text.
class StaticCaptioner final : public Captioner {
public:
    explicit StaticCaptioner(std::string text) : m_text(std::move(text)) {}
    std::string caption(const Image&) override { return m_text; }

private:
    std::string m_text;
};

/// Picks the backend's grounded vocabulary words whose text embedding is
/// closest to the image embedding and phrases them as a short caption.
class RetrievalCaptioner final : public Captioner {
public:
    explicit RetrievalCaptioner(const Backend& backend, int words = 2);
    std::string caption(const Image& after) override;

private:
    const Backend& m_backend;
    int m_words;
};

/// Runs `command <png-path>` and takes the first line of its stdout.
class CommandCaptioner final : public Captioner {
public:
    explicit CommandCaptioner(std::string command) : m_command(std::move(command)) {}
    std::string caption(const Image& after) override;

private:
    std::string m_command;
};

}  // namespace visii
