// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "visii/backend.hpp"
#include "visii/errors.hpp"
#include "visii/image.hpp"
#include "visii/instruction.hpp"
#include "visii/latent.hpp"

namespace visii {

class Captioner;

enum class InitSource { user_text, captioner };

struct InversionConfig {
    int n_steps = 1000;
    int n_timesteps = 1000;
    double lambda_mse = 4.0;
    double lambda_clip = 0.1;
    double learning_rate = 1e-3;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    bool use_clip_loss = true;
    InitSource init_source = InitSource::captioner;
    /// Used when init_source is user_text, and as the fallback when no captioner answers.
    std::string init_text;
    /// Trainable token count; defaults to the caption length (10) or the text's token count.
    std::optional<int> k;
    /// Draw new noise at every step instead of reusing eps_t per timestep.
    bool fresh_noise_per_step = false;

    /// Throws `invalid_argument`; also checks T against the backend when one is given.
    void validate(const Backend* backend = nullptr) const;

    nlohmann::json to_json() const;
    /// Missing fields keep their defaults; unknown fields are rejected.
    static InversionConfig from_json(const nlohmann::json& json);

    /// FNV-1a 64 of the canonical JSON, as 16 hex digits.
    std::string hash() const;
};

struct TrainingPair {
    Image before;
    Image after;
};

struct EditDirection {
    ClipVector delta;
    std::vector<Eigen::VectorXf> per_pair;
};

/// Mean of E(after) - E(before) over normalized embeddings, then normalized.
/// Throws `degenerate` when the mean is zero.
EditDirection edit_direction_from_embeddings(const std::vector<std::pair<ClipVector, ClipVector>>& pairs);
EditDirection compute_edit_direction(const Backend& backend, const std::vector<TrainingPair>& pairs);

/// Mean squared residual.
double reconstruction_loss(const LatentImage& noise, const NoiseEstimate& estimate);

/// 1 - cos(a, b).
double cosine_distance(const Eigen::VectorXf& a, const Eigen::VectorXf& b);

double clip_alignment_loss(const Backend& backend, const InstructionEmbedding& instruction,
                           const EditDirection& direction);

struct LossBreakdown {
    int step = 0;
    int t = 0;
    int pair_index = 0;
    double total = 0.0;
    double mse = 0.0;
    /// Zero when the alignment term is disabled.
    double clip = 0.0;
};

struct LossTerms {
    double lambda_mse = 4.0;
    double lambda_clip = 0.1;
    bool use_clip_loss = true;
};

struct LossAndGradient {
    LossBreakdown loss;
    /// d total / d rows, all 77 rows; callers keep only the trainable slice.
    EmbeddingRows gradient;
};

/// One evaluation of the composite objective at timestep t with the given noise.
LossAndGradient loss_and_gradient(const Backend& backend, const InstructionEmbedding& instruction,
                                  const LatentImage& cond, const LatentImage& target, const LatentImage& noise, int t,
                                  const EditDirection* direction, const LossTerms& terms);

struct InversionHooks {
    /// Initialization captioner; a retrieval captioner over the backend vocabulary when null.
    Captioner* captioner = nullptr;
    std::function<void(const LossBreakdown&)> on_step;
};

struct InversionResult {
    InstructionEmbedding instruction;
    std::vector<LossBreakdown> history;
};

/// Raised when optimization stops early; carries the steps that completed.
class InversionAborted : public Error {
public:
    InversionAborted(ErrorCode code, const std::string& message, std::vector<LossBreakdown> history)
        : Error(code, message), m_history(std::move(history)) {}
    const std::vector<LossBreakdown>& history() const { return m_history; }

private:
    std::vector<LossBreakdown> m_history;
};

/// Builds the starting instruction per cfg.init_source, falling back to
/// cfg.init_text when the captioner is unavailable.
InstructionEmbedding initialize_instruction(const Backend& backend, const std::vector<TrainingPair>& pairs,
                                            const InversionConfig& config, Captioner* captioner);

/// Learns an instruction that maps each before image to its after image.
/// n_steps = 0 returns the initialization unchanged.
InversionResult invert(const Backend& backend, const std::vector<TrainingPair>& pairs, const InversionConfig& config,
                       const InversionHooks& hooks = {});

/// Writes `path` (.visii plus sidecar) and `<stem>.loss.csv` next to it, atomically.
void checkpoint(const InstructionEmbedding& instruction, const std::vector<LossBreakdown>& history,
                const std::filesystem::path& path);

std::filesystem::path loss_csv_path(const std::filesystem::path& visii_path);
std::string loss_history_csv(const std::vector<LossBreakdown>& history);

/// Current UTC time, ISO 8601 with seconds.
std::string utc_timestamp();

}  // namespace visii
