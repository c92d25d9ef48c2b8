// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>

#include "visii/latent.hpp"

namespace visii {

struct InstructionMetadata;

/// Philox domains. Keeping them apart means a seed reused for sampling
/// decisions never aliases the noise it selects.
enum class NoiseDomain : std::uint32_t {
    training = 1,  // eps_t keyed on (seed, t)
    fresh = 2,     // per-step draws when fresh_noise_per_step is set
    sampling = 3,  // timestep and pair choices
    run = 4,       // random-mode inference noise
};

/// Seed-keyed source of per-timestep noise, shared by optimization and replay.
///
/// eps_t is a unit Gaussian array drawn from stream t of (seed, training).
/// A timestep listed in `overrides` instead uses the given stream of
/// (seed, fresh); this is how an instruction trained with fresh noise per
/// step replays the last noise it saw at t.
class NoisePlan {
public:
    NoisePlan(std::uint64_t base_seed, int timesteps, std::map<int, std::uint64_t> overrides = {});

    /// Plan for random-mode inference: same shape of stream, separate domain.
    static NoisePlan for_run(std::uint64_t run_seed, int timesteps);

    /// Replays the noises recorded in an instruction's metadata.
    static NoisePlan from_metadata(const InstructionMetadata& metadata, int timesteps);

    std::uint64_t base_seed() const { return m_seed; }
    int timesteps() const { return m_timesteps; }
    const std::map<int, std::uint64_t>& overrides() const { return m_overrides; }

    LatentImage noise(int t, const LatentShape& shape) const;

    /// Stream `stream` of the fresh domain; used while training with fresh noise.
    LatentImage fresh(std::uint64_t stream, const LatentShape& shape) const;

private:
    NoisePlan(std::uint64_t seed, int timesteps, NoiseDomain domain, std::map<int, std::uint64_t> overrides);

    std::uint64_t m_seed;
    int m_timesteps;
    NoiseDomain m_domain;
    std::map<int, std::uint64_t> m_overrides;
};

/// eps_t for plan and shape; throws `out_of_range` unless 0 <= t < T.
LatentImage noise_for_step(const NoisePlan& plan, int t, const LatentShape& shape);

}  // namespace visii
