// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "visii/backend.hpp"
#include "visii/image.hpp"
#include "visii/instruction.hpp"
#include "visii/latent.hpp"

namespace visii {

enum class NoiseMode { fixed, random };
enum class SamplerKind { deterministic, ancestral };

std::string_view to_string(NoiseMode mode);
std::string_view to_string(SamplerKind sampler);
NoiseMode parse_noise_mode(std::string_view text);
SamplerKind parse_sampler(std::string_view text);

struct GuidanceConfig {
    double text_scale = 7.5;
    double image_scale = 1.5;
    int sampler_steps = 100;
    NoiseMode noise_mode = NoiseMode::fixed;
    SamplerKind sampler = SamplerKind::deterministic;
    /// Seeds the initial latent and injected noise in random mode.
    std::uint64_t run_seed = 0;

    /// Throws `invalid_argument` unless scales >= 1 and 1 <= steps <= timesteps.
    void validate(int timesteps) const;

    nlohmann::json to_json() const;
    /// Missing fields keep their defaults; unknown fields are rejected.
    static GuidanceConfig from_json(const nlohmann::json& json);
};

/// Evenly strided, strictly decreasing timesteps starting at T - 1:
/// t_i = T - 1 - floor(i * T / steps).
std::vector<int> step_schedule(int timesteps, int sampler_steps);

struct EditResult {
    Image image;
    LatentImage latent;
};

/// Edits `image` with a learned instruction, optionally extended by user text.
///
/// The initial latent is eps at the first scheduled timestep, drawn from the
/// instruction's noise plan in fixed mode or from run_seed in random mode.
/// The ancestral sampler injects eps at each following timestep from the same plan.
EditResult apply(const Backend& backend, const InstructionEmbedding& instruction, const Image& image,
                 const GuidanceConfig& config, std::optional<std::string_view> extra_text = {});

/// Sidecar written next to an edited PNG.
nlohmann::json edit_sidecar(const std::string& instruction_file, std::optional<std::string_view> extra_text,
                            const GuidanceConfig& config, std::uint64_t base_seed);

}  // namespace visii
