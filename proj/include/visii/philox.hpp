// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>

namespace visii {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11). Output is a
/// pure function of (key, counter), so any element of any stream can be
/// regenerated without replaying the ones before it.
class Philox4x32 {
public:
    using Counter = std::array<std::uint32_t, 4>;
    using Key = std::array<std::uint32_t, 2>;

    explicit Philox4x32(std::uint64_t seed);

    Counter operator()(Counter counter) const;

private:
    Key m_key;
};

/// Fills `out` with unit Gaussians for stream (domain, stream_id) of `seed`.
/// Element i depends only on (seed, domain, stream_id, i).
void fill_gaussian(std::uint64_t seed, std::uint32_t domain, std::uint64_t stream_id, std::span<float> out);

/// Sequential Gaussian draws over a single stream; used for weight generation.
class GaussianStream {
public:
    GaussianStream(std::uint64_t seed, std::uint32_t domain, std::uint64_t stream_id);

    double next();

private:
    Philox4x32 m_rng;
    std::uint32_t m_domain;
    std::uint64_t m_stream;
    std::uint64_t m_block = 0;
    std::array<double, 4> m_buffer{};
    int m_available = 0;
};

/// Four independent uint32 words for (seed, domain, index).
Philox4x32::Counter random_words(std::uint64_t seed, std::uint32_t domain, std::uint64_t index);

}  // namespace visii
