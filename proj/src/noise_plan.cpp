// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/noise_plan.hpp"

#include "visii/errors.hpp"
#include "visii/instruction.hpp"
#include "visii/philox.hpp"

namespace visii {

namespace {

LatentImage draw(std::uint64_t seed, NoiseDomain domain, std::uint64_t stream, const LatentShape& shape) {
    LatentImage out(shape);
    fill_gaussian(seed, static_cast<std::uint32_t>(domain), stream,
                  std::span<float>(out.values().data(), static_cast<std::size_t>(out.values().size())));
    return out;
}

}  // namespace

NoisePlan::NoisePlan(std::uint64_t base_seed, int timesteps, std::map<int, std::uint64_t> overrides)
    : NoisePlan(base_seed, timesteps, NoiseDomain::training, std::move(overrides)) {}

NoisePlan::NoisePlan(std::uint64_t seed, int timesteps, NoiseDomain domain, std::map<int, std::uint64_t> overrides)
    : m_seed(seed), m_timesteps(timesteps), m_domain(domain), m_overrides(std::move(overrides)) {
    VISII_CHECK(timesteps >= 1, ErrorCode::invalid_argument, "noise plan needs at least one timestep");
    for (const auto& [t, stream] : m_overrides) {
        VISII_CHECK(t >= 0 && t < timesteps, ErrorCode::out_of_range, "noise override for timestep ", t,
                    " outside [0, ", timesteps, ")");
    }
}

NoisePlan NoisePlan::for_run(std::uint64_t run_seed, int timesteps) {
    return NoisePlan(run_seed, timesteps, NoiseDomain::run, {});
}

NoisePlan NoisePlan::from_metadata(const InstructionMetadata& metadata, int timesteps) {
    return NoisePlan(metadata.base_seed, timesteps, metadata.noise_streams);
}

LatentImage NoisePlan::noise(int t, const LatentShape& shape) const {
    VISII_CHECK(t >= 0 && t < m_timesteps, ErrorCode::out_of_range, "timestep ", t, " outside [0, ", m_timesteps,
                ")");
    if (auto it = m_overrides.find(t); it != m_overrides.end()) {
        return fresh(it->second, shape);
    }
    return draw(m_seed, m_domain, static_cast<std::uint64_t>(t), shape);
}

LatentImage NoisePlan::fresh(std::uint64_t stream, const LatentShape& shape) const {
    return draw(m_seed, NoiseDomain::fresh, stream, shape);
}

LatentImage noise_for_step(const NoisePlan& plan, int t, const LatentShape& shape) { return plan.noise(t, shape); }

}  // namespace visii
