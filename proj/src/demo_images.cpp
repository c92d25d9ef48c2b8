// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/demo_images.hpp"

#include <algorithm>
#include <cmath>

#include "visii/errors.hpp"
#include "visii/philox.hpp"

namespace visii {

namespace {

constexpr std::uint32_t kSceneDomain = 0x300;

double unit(std::uint32_t word) { return word * 0x1.0p-32; }

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0))); }

struct Edit {
    const char* name;
    double m[3][3];
    double bias[3];
};

constexpr Edit kEdits[] = {
    {"sepia", {{0.393, 0.769, 0.189}, {0.349, 0.686, 0.168}, {0.272, 0.534, 0.131}}, {0, 0, 0}},
    {"warm", {{1.08, 0, 0}, {0, 1.0, 0}, {0, 0, 0.82}}, {18, 6, 0}},
    {"cool", {{0.82, 0, 0}, {0, 1.0, 0}, {0, 0, 1.08}}, {0, 6, 18}},
    {"grayscale", {{0.299, 0.587, 0.114}, {0.299, 0.587, 0.114}, {0.299, 0.587, 0.114}}, {0, 0, 0}},
    {"darken", {{0.6, 0, 0}, {0, 0.6, 0}, {0, 0, 0.6}}, {0, 0, 0}},
};

}  // namespace

Image demo_scene(int index, int size) {
    VISII_CHECK(size >= 8, ErrorCode::invalid_argument, "demo scenes need at least 8x8 pixels");
    const auto a = random_words(static_cast<std::uint64_t>(index), kSceneDomain, 0);
    const auto b = random_words(static_cast<std::uint64_t>(index), kSceneDomain, 1);

    const double sky_top[3] = {60 + 120 * unit(a[0]), 90 + 120 * unit(a[1]), 150 + 100 * unit(a[2])};
    const double sky_low[3] = {170 + 80 * unit(a[3]), 160 + 80 * unit(b[0]), 140 + 100 * unit(b[1])};
    const double ground[3] = {40 + 120 * unit(b[2]), 70 + 120 * unit(b[3]), 30 + 90 * unit(a[0] ^ b[1])};
    const double disc[3] = {200 + 55 * unit(a[1] ^ b[2]), 120 + 120 * unit(a[2] ^ b[3]), 40 + 120 * unit(a[3] ^ b[0])};
    const double cx = size * (0.2 + 0.6 * unit(a[0] ^ a[3]));
    const double cy = size * (0.15 + 0.3 * unit(a[1] ^ a[2]));
    const double radius = size * (0.08 + 0.12 * unit(b[0] ^ b[3]));
    const double horizon = size * (0.55 + 0.2 * unit(b[1] ^ b[2]));
    const double stripe = 3.0 + 6.0 * unit(a[2] ^ b[1]);

    Image image(size, size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double rgb[3];
            if (y < horizon) {
                const double s = y / horizon;
                for (int c = 0; c < 3; ++c) {
                    rgb[c] = sky_top[c] * (1 - s) + sky_low[c] * s;
                }
                const double d = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
                const double cover = std::clamp(radius + 0.5 - d, 0.0, 1.0);
                for (int c = 0; c < 3; ++c) {
                    rgb[c] = rgb[c] * (1 - cover) + disc[c] * cover;
                }
            } else {
                const double wave = 0.5 + 0.5 * std::sin((x + 0.7 * y) / stripe);
                for (int c = 0; c < 3; ++c) {
                    rgb[c] = ground[c] * (0.75 + 0.35 * wave);
                }
            }
            for (int c = 0; c < 3; ++c) {
                image.at(x, y, c) = to_byte(rgb[c]);
            }
        }
    }
    return image;
}

std::vector<std::string> pixel_edit_names() {
    std::vector<std::string> names;
    for (const auto& edit : kEdits) {
        names.emplace_back(edit.name);
    }
    return names;
}

PixelEdit parse_pixel_edit(std::string_view name) {
    for (std::size_t i = 0; i < std::size(kEdits); ++i) {
        if (name == kEdits[i].name) {
            return static_cast<PixelEdit>(i);
        }
    }
    fail(ErrorCode::invalid_argument, "unknown edit '", name, "'");
}

Image apply_pixel_edit(const Image& image, PixelEdit edit) {
    const auto& e = kEdits[static_cast<std::size_t>(edit)];
    Image out(image.width, image.height);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v = e.bias[c];
                for (int k = 0; k < 3; ++k) {
                    v += e.m[c][k] * image.at(x, y, k);
                }
                out.at(x, y, c) = to_byte(v);
            }
        }
    }
    return out;
}

}  // namespace visii
