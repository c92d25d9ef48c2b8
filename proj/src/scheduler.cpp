// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/scheduler.hpp"

#include <cmath>

#include "visii/errors.hpp"

namespace visii {

NoiseSchedule::NoiseSchedule(std::vector<double> alphas_cumprod) : m_alphas_cumprod(std::move(alphas_cumprod)) {}

NoiseSchedule NoiseSchedule::scaled_linear(int timesteps, double beta_start, double beta_end) {
    VISII_CHECK(timesteps >= 2, ErrorCode::invalid_argument, "schedule needs at least 2 timesteps");
    VISII_CHECK(beta_start > 0 && beta_end < 1 && beta_start <= beta_end, ErrorCode::invalid_argument,
                "invalid beta range [", beta_start, ", ", beta_end, "]");
    std::vector<double> cumprod(timesteps);
    const double lo = std::sqrt(beta_start);
    const double hi = std::sqrt(beta_end);
    double running = 1.0;
    for (int t = 0; t < timesteps; ++t) {
        const double root = lo + (hi - lo) * t / (timesteps - 1);
        running *= 1.0 - root * root;
        cumprod[t] = running;
    }
    return NoiseSchedule(std::move(cumprod));
}

double NoiseSchedule::alpha_cumprod(int t) const {
    VISII_CHECK(t >= 0 && t < timesteps(), ErrorCode::out_of_range, "timestep ", t, " outside [0, ", timesteps(), ")");
    return m_alphas_cumprod[t];
}

double NoiseSchedule::signal_coefficient(int t) const { return std::sqrt(alpha_cumprod(t)); }

double NoiseSchedule::noise_coefficient(int t) const { return std::sqrt(1.0 - alpha_cumprod(t)); }

LatentImage NoiseSchedule::add_noise(const LatentImage& latent, const LatentImage& noise, int t) const {
    VISII_CHECK(latent.shape() == noise.shape(), ErrorCode::shape_mismatch, "noise shape ", noise.shape(),
                " does not match latent shape ", latent.shape());
    const auto signal = static_cast<float>(signal_coefficient(t));
    const auto sigma = static_cast<float>(noise_coefficient(t));
    return LatentImage(latent.shape(), signal * latent.values() + sigma * noise.values());
}

}  // namespace visii
