// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#include <png.h>

#include "visii/errors.hpp"
#include "visii/io.hpp"

namespace visii {

Image::Image(int w, int h) : width(w), height(h) {
    VISII_CHECK(w > 0 && h > 0, ErrorCode::invalid_argument, "image dimensions must be positive, got ", w, "x", h);
    pixels.assign(static_cast<std::size_t>(w) * h * 3, 0);
}

namespace {

struct PngImageGuard {
    png_image* image;
    ~PngImageGuard() { png_image_free(image); }
};

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    PngImageGuard guard{&png};
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
        fail(ErrorCode::format, "not a readable PNG: ", png.message);
    }
    png.format = PNG_FORMAT_RGB;
    VISII_CHECK(png.width > 0 && png.height > 0, ErrorCode::format, "PNG has zero size");
    Image image(static_cast<int>(png.width), static_cast<int>(png.height));
    if (!png_image_finish_read(&png, nullptr, image.pixels.data(), 0, nullptr)) {
        fail(ErrorCode::format, "PNG decode failed: ", png.message);
    }
    return image;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
    VISII_CHECK(!image.empty(), ErrorCode::invalid_argument, "cannot encode an empty image");
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_RGB;
    PngImageGuard guard{&png};

    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&png, nullptr, &size, 0, image.pixels.data(), 0, nullptr)) {
        fail(ErrorCode::format, "PNG size query failed: ", png.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&png, out.data(), &size, 0, image.pixels.data(), 0, nullptr)) {
        fail(ErrorCode::format, "PNG encode failed: ", png.message);
    }
    out.resize(size);
    return out;
}

Image load_png(const std::filesystem::path& path) {
    auto bytes = read_file(path);
    try {
        return decode_png(bytes);
    } catch (const Error& e) {
        fail(e.code(), path.string(), ": ", e.what());
    }
}

void save_png(const Image& image, const std::filesystem::path& path) {
    write_file_atomic(path, encode_png(image));
}

Image center_crop_resize(const Image& image, int width, int height) {
    VISII_CHECK(!image.empty(), ErrorCode::invalid_argument, "cannot resize an empty image");
    VISII_CHECK(width > 0 && height > 0, ErrorCode::invalid_argument, "target size must be positive");

    const double target_aspect = static_cast<double>(width) / height;
    double crop_w = image.width;
    double crop_h = image.height;
    if (crop_w / crop_h > target_aspect) {
        crop_w = crop_h * target_aspect;
    } else {
        crop_h = crop_w / target_aspect;
    }
    const double x0 = (image.width - crop_w) / 2.0;
    const double y0 = (image.height - crop_h) / 2.0;
    const double sx = crop_w / width;
    const double sy = crop_h / height;

    Image out(width, height);
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp(y0 + (y + 0.5) * sy - 0.5, 0.0, image.height - 1.0);
        const int iy0 = static_cast<int>(fy);
        const int iy1 = std::min(iy0 + 1, image.height - 1);
        const double wy = fy - iy0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp(x0 + (x + 0.5) * sx - 0.5, 0.0, image.width - 1.0);
            const int ix0 = static_cast<int>(fx);
            const int ix1 = std::min(ix0 + 1, image.width - 1);
            const double wx = fx - ix0;
            for (int c = 0; c < 3; ++c) {
                const double top = image.at(ix0, iy0, c) * (1 - wx) + image.at(ix1, iy0, c) * wx;
                const double bottom = image.at(ix0, iy1, c) * (1 - wx) + image.at(ix1, iy1, c) * wx;
                out.at(x, y, c) = static_cast<std::uint8_t>(std::lround(std::clamp(top * (1 - wy) + bottom * wy, 0.0, 255.0)));
            }
        }
    }
    return out;
}

}  // namespace visii
