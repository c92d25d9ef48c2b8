// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/philox.hpp"

#include <cmath>
#include <numbers>

namespace visii {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t product = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(product >> 32);
    lo = static_cast<std::uint32_t>(product);
}

// Maps a 32-bit word to (0, 1].
inline double open_unit(std::uint32_t x) { return (static_cast<double>(x) + 1.0) * 0x1.0p-32; }

// Maps a 32-bit word to [0, 1).
inline double half_open_unit(std::uint32_t x) { return static_cast<double>(x) * 0x1.0p-32; }

inline void box_muller(std::uint32_t a, std::uint32_t b, double& z0, double& z1) {
    const double radius = std::sqrt(-2.0 * std::log(open_unit(a)));
    const double angle = 2.0 * std::numbers::pi * half_open_unit(b);
    z0 = radius * std::cos(angle);
    z1 = radius * std::sin(angle);
}

Philox4x32::Counter block(const Philox4x32& rng, std::uint32_t domain, std::uint64_t stream, std::uint64_t index) {
    return rng({static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32) ^ (domain << 16)});
}

}  // namespace

Philox4x32::Philox4x32(std::uint64_t seed)
    : m_key{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)} {}

Philox4x32::Counter Philox4x32::operator()(Counter ctr) const {
    Key key = m_key;
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

void fill_gaussian(std::uint64_t seed, std::uint32_t domain, std::uint64_t stream_id, std::span<float> out) {
    const Philox4x32 rng(seed);
    const std::size_t n = out.size();
    for (std::size_t base = 0; base < n; base += 4) {
        const auto words = block(rng, domain, stream_id, base / 4);
        double z[4];
        box_muller(words[0], words[1], z[0], z[1]);
        box_muller(words[2], words[3], z[2], z[3]);
        for (std::size_t j = 0; j < 4 && base + j < n; ++j) {
            out[base + j] = static_cast<float>(z[j]);
        }
    }
}

GaussianStream::GaussianStream(std::uint64_t seed, std::uint32_t domain, std::uint64_t stream_id)
    : m_rng(seed), m_domain(domain), m_stream(stream_id) {}

double GaussianStream::next() {
    if (m_available == 0) {
        const auto words = block(m_rng, m_domain, m_stream, m_block++);
        box_muller(words[0], words[1], m_buffer[0], m_buffer[1]);
        box_muller(words[2], words[3], m_buffer[2], m_buffer[3]);
        m_available = 4;
    }
    return m_buffer[4 - m_available--];
}

Philox4x32::Counter random_words(std::uint64_t seed, std::uint32_t domain, std::uint64_t index) {
    return block(Philox4x32(seed), domain, 0, index);
}

}  // namespace visii
