// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/editor.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "visii/errors.hpp"
#include "visii/noise_plan.hpp"

namespace visii {

std::string_view to_string(NoiseMode mode) { return mode == NoiseMode::fixed ? "fixed" : "random"; }

std::string_view to_string(SamplerKind sampler) {
    return sampler == SamplerKind::deterministic ? "deterministic" : "ancestral";
}

NoiseMode parse_noise_mode(std::string_view text) {
    if (text == "fixed") {
        return NoiseMode::fixed;
    }
    if (text == "random") {
        return NoiseMode::random;
    }
    fail(ErrorCode::invalid_argument, "noise mode must be 'fixed' or 'random', got '", text, "'");
}

SamplerKind parse_sampler(std::string_view text) {
    if (text == "deterministic") {
        return SamplerKind::deterministic;
    }
    if (text == "ancestral") {
        return SamplerKind::ancestral;
    }
    fail(ErrorCode::invalid_argument, "sampler must be 'deterministic' or 'ancestral', got '", text, "'");
}

void GuidanceConfig::validate(int timesteps) const {
    VISII_CHECK(text_scale >= 1.0 && image_scale >= 1.0, ErrorCode::invalid_argument,
                "guidance scales must be >= 1, got text ", text_scale, " image ", image_scale);
    VISII_CHECK(sampler_steps >= 1 && sampler_steps <= timesteps, ErrorCode::invalid_argument, "sampler_steps ",
                sampler_steps, " outside [1, ", timesteps, "]");
}

nlohmann::json GuidanceConfig::to_json() const {
    return {
        {"text_scale", text_scale},
        {"image_scale", image_scale},
        {"sampler_steps", sampler_steps},
        {"noise_mode", to_string(noise_mode)},
        {"sampler", to_string(sampler)},
        {"run_seed", run_seed},
    };
}

GuidanceConfig GuidanceConfig::from_json(const nlohmann::json& json) {
    VISII_CHECK(json.is_object(), ErrorCode::invalid_argument, "guidance config must be a JSON object");
    static const std::set<std::string> known = {"text_scale",   "image_scale", "sampler_steps",
                                                "noise_mode", "sampler",     "run_seed"};
    GuidanceConfig c;
    try {
        for (const auto& item : json.items()) {
            VISII_CHECK(known.count(item.key()) == 1, ErrorCode::invalid_argument, "unknown guidance field '",
                        item.key(), "'");
        }
        c.text_scale = json.value("text_scale", c.text_scale);
        c.image_scale = json.value("image_scale", c.image_scale);
        c.sampler_steps = json.value("sampler_steps", c.sampler_steps);
        c.run_seed = json.value("run_seed", c.run_seed);
        if (json.contains("noise_mode")) {
            c.noise_mode = parse_noise_mode(json.at("noise_mode").get<std::string>());
        }
        if (json.contains("sampler")) {
            c.sampler = parse_sampler(json.at("sampler").get<std::string>());
        }
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorCode::invalid_argument, "guidance config: ", e.what());
    }
    return c;
}

std::vector<int> step_schedule(int timesteps, int sampler_steps) {
    VISII_CHECK(sampler_steps >= 1 && sampler_steps <= timesteps, ErrorCode::invalid_argument, "sampler_steps ",
                sampler_steps, " outside [1, ", timesteps, "]");
    std::vector<int> schedule(static_cast<std::size_t>(sampler_steps));
    for (int i = 0; i < sampler_steps; ++i) {
        const auto offset = static_cast<long long>(i) * timesteps / sampler_steps;
        schedule[static_cast<std::size_t>(i)] = timesteps - 1 - static_cast<int>(offset);
    }
    return schedule;
}

EditResult apply(const Backend& backend, const InstructionEmbedding& instruction, const Image& image,
                 const GuidanceConfig& config, std::optional<std::string_view> extra_text) {
    config.validate(backend.timesteps());
    const InstructionEmbedding active =
        extra_text ? concat_user_text(backend, instruction, *extra_text) : instruction;

    const auto cond = backend.encode_image(image);
    const auto& shape = cond.shape();
    const NoisePlan plan = config.noise_mode == NoiseMode::fixed
                               ? NoisePlan::from_metadata(instruction.metadata(), backend.timesteps())
                               : NoisePlan::for_run(config.run_seed, backend.timesteps());
    const auto timesteps = step_schedule(backend.timesteps(), config.sampler_steps);
    const auto& schedule = backend.schedule();

    LatentImage latent = plan.noise(timesteps.front(), shape);
    for (std::size_t i = 0; i < timesteps.size(); ++i) {
        const int t = timesteps[i];
        const int prev = i + 1 < timesteps.size() ? timesteps[i + 1] : -1;
        const auto eps = backend.guided_predict(latent, t, active, cond, config.text_scale, config.image_scale);

        const double abar = schedule.alpha_cumprod(t);
        const double abar_prev = prev >= 0 ? schedule.alpha_cumprod(prev) : 1.0;
        const double sqrt_abar = std::sqrt(abar);
        const double sqrt_one_minus = std::sqrt(1.0 - abar);

        double sigma = 0.0;
        if (config.sampler == SamplerKind::ancestral && prev >= 0) {
            sigma = std::sqrt((1.0 - abar_prev) / (1.0 - abar) * (1.0 - abar / abar_prev));
        }
        const double direction = std::sqrt(std::max(0.0, 1.0 - abar_prev - sigma * sigma));
        const double keep = std::sqrt(abar_prev);

        Eigen::ArrayXf next(latent.values().size());
        for (Eigen::Index j = 0; j < next.size(); ++j) {
            const double e = eps.values()[j];
            const double x0 = (latent.values()[j] - sqrt_one_minus * e) / sqrt_abar;
            next[j] = static_cast<float>(keep * x0 + direction * e);
        }
        if (sigma > 0.0) {
            next += static_cast<float>(sigma) * plan.noise(prev, shape).values();
        }
        latent = LatentImage(shape, std::move(next));
    }
    return EditResult{backend.decode_latent(latent), std::move(latent)};
}

nlohmann::json edit_sidecar(const std::string& instruction_file, std::optional<std::string_view> extra_text,
                            const GuidanceConfig& config, std::uint64_t base_seed) {
    return {
        {"instruction_file", instruction_file},
        {"extra_text", extra_text ? nlohmann::json(std::string(*extra_text)) : nlohmann::json(nullptr)},
        {"text_scale", config.text_scale},
        {"image_scale", config.image_scale},
        {"sampler", to_string(config.sampler)},
        {"sampler_steps", config.sampler_steps},
        {"noise_mode", to_string(config.noise_mode)},
        {"seed", config.noise_mode == NoiseMode::fixed ? base_seed : config.run_seed},
    };
}

}  // namespace visii
