// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <ostream>

#include <Eigen/Core>

namespace visii {

struct LatentShape {
    int channels = 0;
    int height = 0;
    int width = 0;

    std::size_t size() const { return static_cast<std::size_t>(channels) * height * width; }
    bool operator==(const LatentShape&) const = default;
};

std::ostream& operator<<(std::ostream& os, const LatentShape& shape);

/// Channel-major (c, h, w) float tensor in the autoencoder's latent space.
class LatentImage {
public:
    LatentImage() = default;
    explicit LatentImage(const LatentShape& shape);
    LatentImage(const LatentShape& shape, Eigen::ArrayXf values);

    const LatentShape& shape() const { return m_shape; }
    std::size_t size() const { return m_shape.size(); }

    Eigen::ArrayXf& values() { return m_values; }
    const Eigen::ArrayXf& values() const { return m_values; }

    float& at(int c, int y, int x) { return m_values[index(c, y, x)]; }
    float at(int c, int y, int x) const { return m_values[index(c, y, x)]; }

    /// Bitwise comparison of shape and values.
    bool bitwise_equal(const LatentImage& other) const;

private:
    Eigen::Index index(int c, int y, int x) const {
        return (static_cast<Eigen::Index>(c) * m_shape.height + y) * m_shape.width + x;
    }

    LatentShape m_shape;
    Eigen::ArrayXf m_values;
};

/// A denoiser output shares the latent layout of the input it was predicted from.
using NoiseEstimate = LatentImage;

/// Vector in the joint image-text embedding space.
struct ClipVector {
    Eigen::VectorXf values;
    bool normalized = false;

    /// L2-normalizes `raw`; throws `degenerate` when its norm is zero.
    static ClipVector unit(const Eigen::VectorXf& raw);
};

/// Cosine similarity computed in double precision.
double cosine_similarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b);

}  // namespace visii
