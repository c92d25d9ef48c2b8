// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

#include "visii/backend.hpp"
#include "visii/tokenizer.hpp"

namespace visii {

/// Tiny synthetic backend with a denoiser that is linear in the pooled
/// instruction. Meant for gradient checks: every weight is exposed so a test
/// can rebuild the loss independently.
///
///   m        = mean of instruction rows 0..eot
///   eps_p    = g_t Wz z_p + Wc c_p + Wu m          (per latent pixel p)
///   text     = normalize(Wp m + bp)
///   image    = normalize(Qi rgb + qb),  rgb = mean of 2 px / 255 - 1
///
/// Latent: f = 1, channels (r, g, b, mean) of the centred pixel.
class LinearBackend final : public Backend {
public:
    struct Weights {
        Eigen::MatrixXf token_table;  // V x D
        Eigen::Matrix4f wz;
        Eigen::Matrix4f wc;
        Eigen::MatrixXf wu;           // 4 x D
        Eigen::MatrixXf wp;           // E x D
        Eigen::VectorXf bp;           // E
        Eigen::Matrix3f qi;           // E x 3, E = 3
        Eigen::Vector3f qb;
    };

    static constexpr int kVocabSize = 64;

    explicit LinearBackend(BackendConfig config);

    const Weights& weights() const { return m_weights; }

    /// Gain on the noisy latent at timestep t.
    double noise_gain(int t) const { return schedule().noise_coefficient(t); }

    LatentImage encode_image(const Image& image) const override;
    Image decode_latent(const LatentImage& latent) const override;

    NoiseEstimate predict_noise(const LatentImage& noisy, int t, const InstructionEmbedding& instruction,
                                const LatentImage& cond) const override;
    EmbeddingRows predict_noise_backward(const LatentImage& noisy, int t, const InstructionEmbedding& instruction,
                                         const LatentImage& cond, const LatentImage& upstream) const override;

    ClipVector embed_image(const Image& image) const override;
    ClipVector embed_instruction_text(const InstructionEmbedding& instruction) const override;
    EmbeddingRows embed_instruction_text_backward(const InstructionEmbedding& instruction,
                                                  const Eigen::VectorXf& upstream) const override;

    std::vector<int> tokenize_content(std::string_view text) const override;
    EmbeddingRows token_embeddings(std::span<const int> ids) const override;
    int start_token() const override { return WordTokenizer::kStartOfText; }
    int end_token() const override { return WordTokenizer::kEndOfText; }
    int pad_token() const override { return WordTokenizer::kPad; }

private:
    Eigen::VectorXf pooled(const InstructionEmbedding& instruction) const;
    EmbeddingRows spread_to_rows(const InstructionEmbedding& instruction, const Eigen::VectorXf& d_pooled) const;

    WordTokenizer m_tokenizer;
    Weights m_weights;
};

}  // namespace visii
