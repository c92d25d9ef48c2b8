// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "visii/image.hpp"
#include "visii/instruction.hpp"
#include "visii/latent.hpp"
#include "visii/scheduler.hpp"

namespace visii {

/// Adapter configuration. Everything a caller needs to know about the frozen
/// models lives here; the inversion and editing code only reads this.
struct BackendConfig {
    std::string model_id = "visii-mini-v1";
    std::string kind = "mini";
    int latent_channels = 4;
    int downscale = 8;
    int text_width = 32;
    int embedding_width = 16;
    int timesteps = 1000;
    int native_resolution = 64;
    double beta_start = 0.00085;
    double beta_end = 0.012;
    /// Mean absolute pixel error bound for decode(encode(image)).
    double reconstruction_tolerance = 12.0;
    std::string null_text;
    std::string null_image = "zeros";
    std::uint64_t weights_seed = 20230607;
    /// Spread of the denoiser's prior around the conditioned edit (mini backend only).
    double data_spread = 0.2;

    static BackendConfig mini();
    static BackendConfig linear();

    static BackendConfig from_json(const nlohmann::json& json);
    nlohmann::json to_json() const;
    static BackendConfig load(const std::filesystem::path& path);
};

/// Contract to a frozen instruction-conditioned latent-diffusion editor and a
/// frozen joint image-text embedding model.
///
/// Implementations are deterministic: no call samples internally. Not
/// thread-safe; serialize access per instance.
class Backend {
public:
    explicit Backend(BackendConfig config);
    virtual ~Backend() = default;

    Backend(const Backend&) = delete;
    Backend& operator=(const Backend&) = delete;

    const BackendConfig& config() const { return m_config; }
    const NoiseSchedule& schedule() const { return m_schedule; }
    int timesteps() const { return m_schedule.timesteps(); }

    /// Latent geometry for an image of the given size; throws `dimension_mismatch`
    /// unless both sides are positive multiples of the downscale factor.
    LatentShape latent_shape_for(int width, int height) const;

    virtual LatentImage encode_image(const Image& image) const = 0;
    virtual Image decode_latent(const LatentImage& latent) const = 0;

    LatentImage add_noise(const LatentImage& latent, const LatentImage& noise, int t) const;

    /// eps_theta(noisy, t, instruction, cond).
    virtual NoiseEstimate predict_noise(const LatentImage& noisy, int t, const InstructionEmbedding& instruction,
                                        const LatentImage& cond) const = 0;

    /// Gradient of <upstream, predict_noise(...)> with respect to every row of
    /// the instruction. Rows past end-of-text may receive zero gradient.
    virtual EmbeddingRows predict_noise_backward(const LatentImage& noisy, int t,
                                                 const InstructionEmbedding& instruction, const LatentImage& cond,
                                                 const LatentImage& upstream) const = 0;

    /// Dual classifier-free guidance:
    ///   e(0,0) + s_I (e(c,0) - e(0,0)) + s_T (e(c,i) - e(c,0))
    /// where 0 is the null text embedding / zero conditioning latent. At
    /// s_T = s_I = 1 this returns predict_noise exactly.
    NoiseEstimate guided_predict(const LatentImage& noisy, int t, const InstructionEmbedding& instruction,
                                 const LatentImage& cond, double text_scale, double image_scale) const;

    virtual ClipVector embed_image(const Image& image) const = 0;

    /// Pooled, projected, normalized text embedding at the end-of-text position.
    virtual ClipVector embed_instruction_text(const InstructionEmbedding& instruction) const = 0;

    /// Gradient of <upstream, embed_instruction_text(...)> with respect to the rows.
    virtual EmbeddingRows embed_instruction_text_backward(const InstructionEmbedding& instruction,
                                                          const Eigen::VectorXf& upstream) const = 0;

    /// Content token ids, no special tokens and no length cap.
    virtual std::vector<int> tokenize_content(std::string_view text) const = 0;

    /// [SOT, content, EOT, PAD...] padded to kContextLength.
    std::vector<int> tokenize(std::string_view text) const;

    virtual EmbeddingRows token_embeddings(std::span<const int> ids) const = 0;

    virtual int start_token() const = 0;
    virtual int end_token() const = 0;
    virtual int pad_token() const = 0;

    /// Words a retrieval captioner may choose from; empty if the backend has no grounded vocabulary.
    virtual std::vector<std::string> caption_vocabulary() const { return {}; }

    /// Embedding of the null text (the empty string by default).
    const InstructionEmbedding& null_instruction() const;

    /// Null image conditioning: a zero latent.
    LatentImage null_condition(const LatentShape& shape) const { return LatentImage(shape); }

protected:
    void check_prediction_inputs(const LatentImage& noisy, int t, const InstructionEmbedding& instruction,
                                 const LatentImage& cond) const;

    /// Derived constructors call this once their token tables exist.
    void build_null_instruction();

private:
    BackendConfig m_config;
    NoiseSchedule m_schedule;
    std::optional<InstructionEmbedding> m_null_instruction;
};

std::unique_ptr<Backend> make_backend(const BackendConfig& config);

/// Reads the adapter config named by VISII_BACKEND_CONFIG, or falls back to BackendConfig::mini().
std::unique_ptr<Backend> load_backend_from_env();

inline constexpr const char* kBackendConfigEnv = "VISII_BACKEND_CONFIG";

}  // namespace visii
