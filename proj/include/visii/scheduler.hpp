// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "visii/latent.hpp"

namespace visii {

/// Discrete forward-diffusion schedule: cumulative signal retention per timestep.
class NoiseSchedule {
public:
    /// Stable-Diffusion style "scaled linear" betas: linspace over sqrt(beta), squared.
    static NoiseSchedule scaled_linear(int timesteps, double beta_start, double beta_end);

    int timesteps() const { return static_cast<int>(m_alphas_cumprod.size()); }
    double alpha_cumprod(int t) const;
    double signal_coefficient(int t) const;
    double noise_coefficient(int t) const;

    /// sqrt(abar_t) * latent + sqrt(1 - abar_t) * noise.
    LatentImage add_noise(const LatentImage& latent, const LatentImage& noise, int t) const;

private:
    explicit NoiseSchedule(std::vector<double> alphas_cumprod);

    std::vector<double> m_alphas_cumprod;
};

}  // namespace visii
