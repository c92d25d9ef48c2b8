// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/latent.hpp"

#include <cmath>
#include <cstring>

#include "visii/errors.hpp"

namespace visii {

std::ostream& operator<<(std::ostream& os, const LatentShape& shape) {
    return os << "(" << shape.channels << ", " << shape.height << ", " << shape.width << ")";
}

LatentImage::LatentImage(const LatentShape& shape)
    : m_shape(shape), m_values(Eigen::ArrayXf::Zero(static_cast<Eigen::Index>(shape.size()))) {}

LatentImage::LatentImage(const LatentShape& shape, Eigen::ArrayXf values)
    : m_shape(shape), m_values(std::move(values)) {
    VISII_CHECK(static_cast<std::size_t>(m_values.size()) == shape.size(), ErrorCode::shape_mismatch,
                "latent of shape ", shape, " needs ", shape.size(), " values, got ", m_values.size());
}

bool LatentImage::bitwise_equal(const LatentImage& other) const {
    return m_shape == other.m_shape &&
           std::memcmp(m_values.data(), other.m_values.data(), sizeof(float) * m_values.size()) == 0;
}

ClipVector ClipVector::unit(const Eigen::VectorXf& raw) {
    double norm2 = 0.0;
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
        norm2 += static_cast<double>(raw[i]) * raw[i];
    }
    VISII_CHECK(norm2 > 0.0 && std::isfinite(norm2), ErrorCode::degenerate, "cannot normalize a zero-length vector");
    const double inv = 1.0 / std::sqrt(norm2);
    Eigen::VectorXf out(raw.size());
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
        out[i] = static_cast<float>(raw[i] * inv);
    }
    return ClipVector{std::move(out), true};
}

double cosine_similarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
    VISII_CHECK(a.size() == b.size(), ErrorCode::shape_mismatch, "cosine of vectors with widths ", a.size(), " and ",
                b.size());
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    VISII_CHECK(na > 0.0 && nb > 0.0, ErrorCode::degenerate, "cosine of a zero-length vector");
    return dot / std::sqrt(na * nb);
}

}  // namespace visii
