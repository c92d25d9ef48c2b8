// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "visii/image.hpp"

namespace visii {

/// Procedural test scenes: sky gradient, a disc, ground band, some texture.
/// The layout and palette are a pure function of `index`.
Image demo_scene(int index, int size = 64);

/// Global colour edits used to build before/after pairs without a photo editor.
enum class PixelEdit { sepia, warm, cool, grayscale, darken };

std::vector<std::string> pixel_edit_names();
PixelEdit parse_pixel_edit(std::string_view name);
Image apply_pixel_edit(const Image& image, PixelEdit edit);

}  // namespace visii
