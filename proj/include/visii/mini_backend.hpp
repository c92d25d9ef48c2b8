// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "visii/backend.hpp"
#include "visii/tokenizer.hpp"

namespace visii {

/// Desk-scale stand-in for a pretrained instruction editor and joint
/// image-text model. Weights are derived from a seed, so two instances built
/// from the same config are bit-identical.
///
/// Autoencoder: orthonormal 8x8 patch projection onto mean opponent colour
/// plus a horizontal luma ramp, four latent channels.
///
/// Text encoder: token + positional rows, mean-pooled through end-of-text,
/// one residual tanh layer, then a projection into the joint space. Lexicon
/// words are grounded on the image embedding of their canonical colour.
///
/// Denoiser: the posterior-mean noise estimate for a Gaussian prior centred
/// on an instruction-dependent affine map of the conditioning latent,
///   eps = k_t (z_t - a_t mu),  mu = A(u) cond + b(u),  u = G(instr) - G(null).
class MiniBackend final : public Backend {
public:
    static constexpr int kFeatureCount = 18;
    static constexpr int kHiddenWidth = 64;
    static constexpr int kPatch = 8;
    static constexpr float kLatentScale = 0.1f;

    struct LexiconEntry {
        std::string word;
        std::array<std::uint8_t, 3> rgb;
    };
    static const std::vector<LexiconEntry>& lexicon();

    explicit MiniBackend(BackendConfig config);

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

    std::vector<std::string> caption_vocabulary() const override;

    /// Raw image features before the joint-space projection, computed in double.
    static std::array<double, kFeatureCount> image_features(const Image& image);

    /// Every weight and rule needed to recompute the embeddings outside this library.
    nlohmann::json export_weights() const;

private:
    using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    struct TextState {
        Eigen::VectorXf pooled;  // M
        Eigen::VectorXf hidden;  // tanh(W1 M + b1)
        Eigen::VectorXf output;  // G
    };

    TextState encode_text(const InstructionEmbedding& instruction) const;
    Eigen::VectorXf pooled_backward(const TextState& state, const Eigen::VectorXf& d_output) const;
    EmbeddingRows spread_to_rows(const InstructionEmbedding& instruction, const Eigen::VectorXf& d_pooled) const;

    void edit_map(const Eigen::VectorXf& u, Eigen::Matrix4f& a, Eigen::Vector4f& b) const;
    double posterior_gain(int t) const;

    WordTokenizer m_tokenizer;
    Matrix m_token_table;  // V x D
    Matrix m_positional;   // 77 x D
    Matrix m_w1;           // H x D
    Eigen::VectorXf m_b1;  // H
    Matrix m_w2;           // D x H
    Matrix m_projection;   // E x D, [R | 0]
    Matrix m_rotation;     // E x E, orthogonal

    std::array<double, kFeatureCount> m_feature_origin{};
    std::array<double, kFeatureCount> m_feature_scale{};
    Matrix m_image_projection;  // E x F
    Eigen::VectorXf m_image_bias;

    Matrix m_wa;  // 16 x D
    Matrix m_wb;  // 4 x D

    Eigen::VectorXf m_null_output;
};

}  // namespace visii
