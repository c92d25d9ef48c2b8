// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/linear_backend.hpp"

#include <algorithm>
#include <cmath>

#include "visii/errors.hpp"
#include "visii/philox.hpp"

namespace visii {

namespace {

constexpr std::uint32_t kLinearDomain = 0x200;

template <typename M>
void fill(M& m, GaussianStream& stream, double stddev) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            m(r, c) = static_cast<float>(stddev * stream.next());
        }
    }
}

}  // namespace

LinearBackend::LinearBackend(BackendConfig config)
    : Backend(std::move(config)), m_tokenizer(kVocabSize, {"red", "green", "blue"}) {
    const auto& cfg = this->config();
    VISII_CHECK(cfg.latent_channels == 4 && cfg.downscale == 1 && cfg.embedding_width == 3, ErrorCode::backend,
                "linear backend geometry is fixed at c=4, f=1, E=3");
    const int d = cfg.text_width;
    GaussianStream stream(cfg.weights_seed, kLinearDomain, 0);
    m_weights.token_table.resize(kVocabSize, d);
    fill(m_weights.token_table, stream, 0.5);
    fill(m_weights.wz, stream, 0.3);
    fill(m_weights.wc, stream, 0.3);
    m_weights.wu.resize(4, d);
    fill(m_weights.wu, stream, 0.5);
    m_weights.wp.resize(3, d);
    fill(m_weights.wp, stream, 0.5);
    m_weights.bp.resize(3);
    fill(m_weights.bp, stream, 0.1);
    fill(m_weights.qi, stream, 1.0);
    fill(m_weights.qb, stream, 0.1);
    build_null_instruction();
}

LatentImage LinearBackend::encode_image(const Image& image) const {
    const LatentShape shape = latent_shape_for(image.width, image.height);
    LatentImage latent(shape);
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            float sum = 0.0f;
            for (int c = 0; c < 3; ++c) {
                const float v = 2.0f * image.at(x, y, c) / 255.0f - 1.0f;
                latent.at(c, y, x) = v;
                sum += v;
            }
            latent.at(3, y, x) = sum / 3.0f;
        }
    }
    return latent;
}

Image LinearBackend::decode_latent(const LatentImage& latent) const {
    const auto& shape = latent.shape();
    VISII_CHECK(shape.channels == 4 && shape.height > 0 && shape.width > 0, ErrorCode::shape_mismatch,
                "cannot decode latent of shape ", shape);
    Image image(shape.width, shape.height);
    for (int y = 0; y < shape.height; ++y) {
        for (int x = 0; x < shape.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const float v = latent.at(c, y, x);
                const double p = std::isfinite(v) ? std::clamp((v + 1.0) * 127.5, 0.0, 255.0) : 127.5;
                image.at(x, y, c) = static_cast<std::uint8_t>(std::lround(p));
            }
        }
    }
    return image;
}

Eigen::VectorXf LinearBackend::pooled(const InstructionEmbedding& instruction) const {
    const int count = instruction.eot_index() + 1;
    return (instruction.rows().topRows(count).colwise().sum() / static_cast<float>(count)).transpose();
}

EmbeddingRows LinearBackend::spread_to_rows(const InstructionEmbedding& instruction,
                                            const Eigen::VectorXf& d_pooled) const {
    const int count = instruction.eot_index() + 1;
    EmbeddingRows grad = EmbeddingRows::Zero(kContextLength, config().text_width);
    const Eigen::RowVectorXf share = d_pooled.transpose() / static_cast<float>(count);
    for (int i = 0; i < count; ++i) {
        grad.row(i) = share;
    }
    return grad;
}

NoiseEstimate LinearBackend::predict_noise(const LatentImage& noisy, int t, const InstructionEmbedding& instruction,
                                           const LatentImage& cond) const {
    check_prediction_inputs(noisy, t, instruction, cond);
    const Eigen::Vector4f text = m_weights.wu * pooled(instruction);
    const auto gain = static_cast<float>(noise_gain(t));
    const auto& shape = noisy.shape();
    NoiseEstimate out(shape);
    for (int y = 0; y < shape.height; ++y) {
        for (int x = 0; x < shape.width; ++x) {
            Eigen::Vector4f z, c;
            for (int k = 0; k < 4; ++k) {
                z[k] = noisy.at(k, y, x);
                c[k] = cond.at(k, y, x);
            }
            const Eigen::Vector4f eps = gain * (m_weights.wz * z) + m_weights.wc * c + text;
            for (int k = 0; k < 4; ++k) {
                out.at(k, y, x) = eps[k];
            }
        }
    }
    return out;
}

EmbeddingRows LinearBackend::predict_noise_backward(const LatentImage& noisy, int t,
                                                    const InstructionEmbedding& instruction, const LatentImage& cond,
                                                    const LatentImage& upstream) const {
    check_prediction_inputs(noisy, t, instruction, cond);
    VISII_CHECK(upstream.shape() == noisy.shape(), ErrorCode::shape_mismatch, "upstream gradient ", upstream.shape(),
                " does not match latent ", noisy.shape());
    Eigen::Vector4f total = Eigen::Vector4f::Zero();
    const auto& shape = noisy.shape();
    for (int y = 0; y < shape.height; ++y) {
        for (int x = 0; x < shape.width; ++x) {
            for (int k = 0; k < 4; ++k) {
                total[k] += upstream.at(k, y, x);
            }
        }
    }
    return spread_to_rows(instruction, m_weights.wu.transpose() * total);
}

ClipVector LinearBackend::embed_image(const Image& image) const {
    VISII_CHECK(!image.empty(), ErrorCode::invalid_argument, "cannot embed an empty image");
    Eigen::Vector3f mean = Eigen::Vector3f::Zero();
    for (int y = 0; y < image.height; ++y) {
        for (int x = 0; x < image.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                mean[c] += 2.0f * image.at(x, y, c) / 255.0f - 1.0f;
            }
        }
    }
    mean /= static_cast<float>(image.width * image.height);
    return ClipVector::unit(m_weights.qi * mean + m_weights.qb);
}

ClipVector LinearBackend::embed_instruction_text(const InstructionEmbedding& instruction) const {
    VISII_CHECK(instruction.width() == config().text_width, ErrorCode::shape_mismatch, "instruction width ",
                instruction.width(), " does not match backend width ", config().text_width);
    return ClipVector::unit(m_weights.wp * pooled(instruction) + m_weights.bp);
}

EmbeddingRows LinearBackend::embed_instruction_text_backward(const InstructionEmbedding& instruction,
                                                             const Eigen::VectorXf& upstream) const {
    VISII_CHECK(upstream.size() == 3, ErrorCode::shape_mismatch, "upstream width ", upstream.size(),
                " does not match embedding width 3");
    const Eigen::VectorXf v = m_weights.wp * pooled(instruction) + m_weights.bp;
    const float norm = v.norm();
    VISII_CHECK(norm > 0.0f, ErrorCode::degenerate, "text embedding has zero length");
    const Eigen::VectorXf y = v / norm;
    const Eigen::VectorXf d_v = (upstream - y * y.dot(upstream)) / norm;
    return spread_to_rows(instruction, m_weights.wp.transpose() * d_v);
}

std::vector<int> LinearBackend::tokenize_content(std::string_view text) const {
    return m_tokenizer.encode_content(text);
}

EmbeddingRows LinearBackend::token_embeddings(std::span<const int> ids) const {
    EmbeddingRows rows(static_cast<Eigen::Index>(ids.size()), config().text_width);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        VISII_CHECK(ids[i] >= 0 && ids[i] < kVocabSize, ErrorCode::out_of_range, "token id ", ids[i],
                    " outside vocabulary");
        rows.row(static_cast<Eigen::Index>(i)) = m_weights.token_table.row(ids[i]);
    }
    return rows;
}

}  // namespace visii
