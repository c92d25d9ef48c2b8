// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace visii {

/// 8-bit RGB image, interleaved, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int width, int height);

    bool empty() const { return pixels.empty(); }

    std::uint8_t& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }

    bool operator==(const Image&) const = default;
};

Image decode_png(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_png(const Image& image);

Image load_png(const std::filesystem::path& path);
void save_png(const Image& image, const std::filesystem::path& path);

/// Crops the largest centered region with the target aspect ratio, then
/// resamples it bilinearly to `width` x `height`.
Image center_crop_resize(const Image& image, int width, int height);

}  // namespace visii
