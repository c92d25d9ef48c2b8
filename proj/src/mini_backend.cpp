// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/mini_backend.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/QR>

#include "visii/errors.hpp"
#include "visii/philox.hpp"

namespace visii {

namespace {

// Philox domains for weight tensors; noise streams use the low domains.
enum WeightDomain : std::uint32_t {
    kTokenTable = 0x100,
    kPositional,
    kHiddenWeight,
    kHiddenBias,
    kResidualWeight,
    kRotation,
    kImageProjection,
    kImageBias,
    kEditMatrix,
    kEditBias,
};

constexpr int kSemanticWidth = 16;

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt3 = 0.57735026918962576451;
constexpr double kInvSqrt6 = 0.40824829046386301637;

// Opponent colour basis; rows are orthonormal.
constexpr double kOpponent[3][3] = {
    {kInvSqrt3, kInvSqrt3, kInvSqrt3},
    {kInvSqrt2, -kInvSqrt2, 0.0},
    {kInvSqrt6, kInvSqrt6, -2.0 * kInvSqrt6},
};

template <typename M>
M gaussian(std::uint64_t seed, std::uint32_t domain, int rows, int cols, double stddev) {
    GaussianStream stream(seed, domain, 0);
    M out(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            out(r, c) = static_cast<float>(stddev * stream.next());
        }
    }
    return out;
}

template <typename M>
nlohmann::json matrix_json(const M& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        std::vector<float> row(static_cast<std::size_t>(m.cols()));
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            row[static_cast<std::size_t>(c)] = m(r, c);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

Image solid(const std::array<std::uint8_t, 3>& rgb) {
    Image image(8, 8);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            for (int c = 0; c < 3; ++c) {
                image.at(x, y, c) = rgb[c];
            }
        }
    }
    return image;
}

}  // namespace

const std::vector<MiniBackend::LexiconEntry>& MiniBackend::lexicon() {
    static const std::vector<LexiconEntry> entries = {
        {"red", {220, 40, 40}},     {"orange", {240, 140, 30}}, {"yellow", {240, 220, 50}},
        {"green", {50, 170, 60}},   {"teal", {30, 140, 140}},   {"cyan", {60, 210, 230}},
        {"blue", {40, 70, 210}},    {"purple", {130, 50, 180}}, {"pink", {240, 140, 190}},
        {"brown", {130, 80, 40}},   {"white", {245, 245, 245}}, {"black", {15, 15, 15}},
        {"gray", {150, 150, 150}},  {"bright", {230, 230, 210}}, {"dark", {40, 40, 50}},
        {"warm", {230, 160, 100}},  {"cool", {110, 160, 230}},  {"sepia", {160, 120, 80}},
        {"golden", {220, 180, 60}}, {"pale", {225, 215, 205}},
    };
    return entries;
}

namespace {

std::vector<std::string> lexicon_words() {
    std::vector<std::string> words;
    for (const auto& entry : MiniBackend::lexicon()) {
        words.push_back(entry.word);
    }
    return words;
}

constexpr int kVocabSize = 4096;

}  // namespace

MiniBackend::MiniBackend(BackendConfig config) : Backend(std::move(config)), m_tokenizer(kVocabSize, lexicon_words()) {
    const auto& cfg = this->config();
    VISII_CHECK(cfg.latent_channels == 4 && cfg.downscale == kPatch && cfg.text_width == 2 * kSemanticWidth &&
                    cfg.embedding_width == kSemanticWidth,
                ErrorCode::backend, "mini backend geometry is fixed at c=4, f=8, D=32, E=16");
    VISII_CHECK(cfg.data_spread > 0.0, ErrorCode::backend, "data_spread must be positive");
    const std::uint64_t seed = cfg.weights_seed;
    const int d = cfg.text_width;
    const int e = cfg.embedding_width;

    // Image side first: lexicon rows are grounded on image embeddings.
    const Image gray = solid({128, 128, 128});
    m_feature_origin = image_features(gray);
    m_feature_scale = {2.0, 3.0, 3.0, 1.5, 1.5, 1.5, 1.5, 1.5, 1.5, 1.5, 1.5, 1.5, 1.5, 1.5, 1.5, 2.0, 4.0, 1.0};
    m_image_projection = gaussian<Matrix>(seed, kImageProjection, e, kFeatureCount, std::sqrt(1.0 / kFeatureCount));
    m_image_bias = gaussian<Eigen::MatrixXf>(seed, kImageBias, e, 1, 0.02).col(0);

    {
        Eigen::MatrixXd raw = gaussian<Eigen::MatrixXf>(seed, kRotation, e, e, 1.0).cast<double>();
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(raw);
        Eigen::MatrixXd q = qr.householderQ();
        const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (int j = 0; j < e; ++j) {
            if (r(j, j) < 0) {
                q.col(j) = -q.col(j);
            }
        }
        m_rotation = q.cast<float>();
    }
    m_projection = Matrix::Zero(e, d);
    m_projection.leftCols(e) = m_rotation;

    m_w1 = gaussian<Matrix>(seed, kHiddenWeight, kHiddenWidth, d, std::sqrt(1.0 / d));
    m_b1 = gaussian<Eigen::MatrixXf>(seed, kHiddenBias, kHiddenWidth, 1, 0.1).col(0);
    m_w2 = gaussian<Matrix>(seed, kResidualWeight, d, kHiddenWidth, 0.02);

    m_token_table.resize(kVocabSize, d);
    for (int v = 0; v < kVocabSize; ++v) {
        GaussianStream stream(seed, kTokenTable, static_cast<std::uint64_t>(v));
        const double semantic_std = v < 3 ? 0.03 : 0.05;
        for (int j = 0; j < kSemanticWidth; ++j) {
            m_token_table(v, j) = static_cast<float>(semantic_std * stream.next());
        }
        for (int j = kSemanticWidth; j < d; ++j) {
            m_token_table(v, j) = static_cast<float>(0.3 * stream.next());
        }
    }
    const auto& entries = lexicon();
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const Eigen::VectorXf grounded = m_rotation.transpose() * embed_image(solid(entries[i].rgb)).values;
        m_token_table.row(3 + static_cast<int>(i)).head(kSemanticWidth) = grounded.transpose();
    }

    m_positional = Matrix::Zero(kContextLength, d);
    m_positional.rightCols(d - kSemanticWidth) =
        gaussian<Matrix>(seed, kPositional, kContextLength, d - kSemanticWidth, 0.1);

    m_wa = gaussian<Matrix>(seed, kEditMatrix, 16, d, 0.15);
    m_wb = gaussian<Matrix>(seed, kEditBias, 4, d, 0.2);

    build_null_instruction();
    m_null_output = encode_text(null_instruction()).output;
}

std::array<double, MiniBackend::kFeatureCount> MiniBackend::image_features(const Image& image) {
    VISII_CHECK(!image.empty() && image.width > 0 && image.height > 0, ErrorCode::invalid_argument,
                "cannot embed an empty image");
    const int w = image.width;
    const int h = image.height;
    const std::size_t n = static_cast<std::size_t>(w) * h;
    std::vector<std::array<double, 3>> opp(n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double rgb[3];
            for (int c = 0; c < 3; ++c) {
                rgb[c] = image.at(x, y, c) / 255.0;
            }
            auto& o = opp[static_cast<std::size_t>(y) * w + x];
            for (int k = 0; k < 3; ++k) {
                o[k] = kOpponent[k][0] * rgb[0] + kOpponent[k][1] * rgb[1] + kOpponent[k][2] * rgb[2];
            }
        }
    }

    std::array<double, 3> mean{};
    std::array<std::array<double, 3>, 4> quad{};
    std::array<int, 4> quad_count{};
    double chroma = 0.0;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto& o = opp[static_cast<std::size_t>(y) * w + x];
            const int q = (2 * y < h ? 0 : 2) + (2 * x < w ? 0 : 1);
            for (int k = 0; k < 3; ++k) {
                mean[k] += o[k];
                quad[q][k] += o[k];
            }
            ++quad_count[q];
            chroma += std::sqrt(o[1] * o[1] + o[2] * o[2]);
        }
    }
    for (auto& m : mean) {
        m /= static_cast<double>(n);
    }

    std::array<double, kFeatureCount> f{};
    f[0] = mean[0];
    f[1] = mean[1];
    f[2] = mean[2];
    for (int q = 0; q < 4; ++q) {
        if (quad_count[q] == 0) {
            continue;
        }
        f[3 + q] = quad[q][0] / quad_count[q] - mean[0];
        f[7 + 2 * q] = quad[q][1] / quad_count[q] - mean[1];
        f[8 + 2 * q] = quad[q][2] / quad_count[q] - mean[2];
    }

    double var = 0.0;
    for (const auto& o : opp) {
        var += (o[0] - mean[0]) * (o[0] - mean[0]);
    }
    f[15] = std::sqrt(var / static_cast<double>(n));

    double grad = 0.0;
    if (w > 1 && h > 1) {
        for (int y = 0; y + 1 < h; ++y) {
            for (int x = 0; x + 1 < w; ++x) {
                const double l = opp[static_cast<std::size_t>(y) * w + x][0];
                const double dx = opp[static_cast<std::size_t>(y) * w + x + 1][0] - l;
                const double dy = opp[static_cast<std::size_t>(y + 1) * w + x][0] - l;
                grad += std::sqrt(dx * dx + dy * dy);
            }
        }
        grad /= static_cast<double>(w - 1) * (h - 1);
    }
    f[16] = grad;
    f[17] = chroma / static_cast<double>(n);
    return f;
}

ClipVector MiniBackend::embed_image(const Image& image) const {
    const auto f = image_features(image);
    const int e = config().embedding_width;
    std::vector<double> raw(static_cast<std::size_t>(e));
    double norm2 = 0.0;
    for (int i = 0; i < e; ++i) {
        double acc = m_image_bias[i];
        for (int j = 0; j < kFeatureCount; ++j) {
            acc += static_cast<double>(m_image_projection(i, j)) * m_feature_scale[j] * (f[j] - m_feature_origin[j]);
        }
        raw[i] = acc;
        norm2 += acc * acc;
    }
    VISII_CHECK(norm2 > 0.0, ErrorCode::degenerate, "image embedding has zero length");
    const double inv = 1.0 / std::sqrt(norm2);
    Eigen::VectorXf out(e);
    for (int i = 0; i < e; ++i) {
        out[i] = static_cast<float>(raw[i] * inv);
    }
    return ClipVector{std::move(out), true};
}

LatentImage MiniBackend::encode_image(const Image& image) const {
    const LatentShape shape = latent_shape_for(image.width, image.height);
    LatentImage latent(shape);
    for (int py = 0; py < shape.height; ++py) {
        for (int px = 0; px < shape.width; ++px) {
            double sum[3] = {0, 0, 0};
            double ramp[3] = {0, 0, 0};
            for (int y = 0; y < kPatch; ++y) {
                for (int x = 0; x < kPatch; ++x) {
                    const double sign = x < kPatch / 2 ? 1.0 : -1.0;
                    for (int c = 0; c < 3; ++c) {
                        const double v = 2.0 * image.at(px * kPatch + x, py * kPatch + y, c) / 255.0 - 1.0;
                        sum[c] += v;
                        ramp[c] += sign * v;
                    }
                }
            }
            for (int k = 0; k < 3; ++k) {
                const double coeff =
                    (kOpponent[k][0] * sum[0] + kOpponent[k][1] * sum[1] + kOpponent[k][2] * sum[2]) / kPatch;
                latent.at(k, py, px) = static_cast<float>(kLatentScale * coeff);
            }
            const double coeff = (kOpponent[0][0] * ramp[0] + kOpponent[0][1] * ramp[1] + kOpponent[0][2] * ramp[2]) /
                                 kPatch;
            latent.at(3, py, px) = static_cast<float>(kLatentScale * coeff);
        }
    }
    return latent;
}

Image MiniBackend::decode_latent(const LatentImage& latent) const {
    const auto& shape = latent.shape();
    VISII_CHECK(shape.channels == 4 && shape.height > 0 && shape.width > 0 && latent.values().size() ==
                    static_cast<Eigen::Index>(shape.size()),
                ErrorCode::shape_mismatch, "cannot decode latent of shape ", shape);
    Image image(shape.width * kPatch, shape.height * kPatch);
    for (int py = 0; py < shape.height; ++py) {
        for (int px = 0; px < shape.width; ++px) {
            double coeff[4];
            for (int k = 0; k < 4; ++k) {
                const double v = latent.at(k, py, px);
                coeff[k] = std::isfinite(v) ? v / kLatentScale : 0.0;
            }
            for (int y = 0; y < kPatch; ++y) {
                for (int x = 0; x < kPatch; ++x) {
                    const double sign = x < kPatch / 2 ? 1.0 : -1.0;
                    for (int c = 0; c < 3; ++c) {
                        const double v = (coeff[0] * kOpponent[0][c] + coeff[1] * kOpponent[1][c] +
                                          coeff[2] * kOpponent[2][c] + sign * coeff[3] * kOpponent[0][c]) /
                                         kPatch;
                        const double p = std::clamp((v + 1.0) * 127.5, 0.0, 255.0);
                        image.at(px * kPatch + x, py * kPatch + y, c) = static_cast<std::uint8_t>(std::lround(p));
                    }
                }
            }
        }
    }
    return image;
}

MiniBackend::TextState MiniBackend::encode_text(const InstructionEmbedding& instruction) const {
    const int eot = instruction.eot_index();
    const int count = eot + 1;
    TextState state;
    state.pooled = ((instruction.rows().topRows(count) + m_positional.topRows(count)).colwise().sum() /
                    static_cast<float>(count))
                       .transpose();
    state.hidden = (m_w1 * state.pooled + m_b1).array().tanh().matrix();
    state.output = state.pooled + m_w2 * state.hidden;
    return state;
}

Eigen::VectorXf MiniBackend::pooled_backward(const TextState& state, const Eigen::VectorXf& d_output) const {
    const Eigen::VectorXf d_pre =
        ((m_w2.transpose() * d_output).array() * (1.0f - state.hidden.array().square())).matrix();
    return d_output + m_w1.transpose() * d_pre;
}

EmbeddingRows MiniBackend::spread_to_rows(const InstructionEmbedding& instruction,
                                          const Eigen::VectorXf& d_pooled) const {
    const int count = instruction.eot_index() + 1;
    EmbeddingRows grad = EmbeddingRows::Zero(kContextLength, config().text_width);
    const Eigen::RowVectorXf share = d_pooled.transpose() / static_cast<float>(count);
    for (int i = 0; i < count; ++i) {
        grad.row(i) = share;
    }
    return grad;
}

void MiniBackend::edit_map(const Eigen::VectorXf& u, Eigen::Matrix4f& a, Eigen::Vector4f& b) const {
    const Eigen::VectorXf flat = m_wa * u;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            a(i, j) = (i == j ? 1.0f : 0.0f) + flat[4 * i + j];
        }
    }
    b = m_wb * u;
}

double MiniBackend::posterior_gain(int t) const {
    const double a = schedule().signal_coefficient(t);
    const double s = schedule().noise_coefficient(t);
    const double spread = config().data_spread;
    return s / (a * a * spread * spread + s * s);
}

NoiseEstimate MiniBackend::predict_noise(const LatentImage& noisy, int t, const InstructionEmbedding& instruction,
                                         const LatentImage& cond) const {
    check_prediction_inputs(noisy, t, instruction, cond);
    const auto state = encode_text(instruction);
    Eigen::Matrix4f a;
    Eigen::Vector4f b;
    edit_map(state.output - m_null_output, a, b);
    const auto gain = static_cast<float>(posterior_gain(t));
    const auto signal = static_cast<float>(schedule().signal_coefficient(t));

    const auto& shape = noisy.shape();
    NoiseEstimate out(shape);
    for (int y = 0; y < shape.height; ++y) {
        for (int x = 0; x < shape.width; ++x) {
            Eigen::Vector4f c;
            for (int k = 0; k < 4; ++k) {
                c[k] = cond.at(k, y, x);
            }
            const Eigen::Vector4f mu = a * c + b;
            for (int k = 0; k < 4; ++k) {
                out.at(k, y, x) = gain * (noisy.at(k, y, x) - signal * mu[k]);
            }
        }
    }
    return out;
}

EmbeddingRows MiniBackend::predict_noise_backward(const LatentImage& noisy, int t,
                                                  const InstructionEmbedding& instruction, const LatentImage& cond,
                                                  const LatentImage& upstream) const {
    check_prediction_inputs(noisy, t, instruction, cond);
    VISII_CHECK(upstream.shape() == noisy.shape(), ErrorCode::shape_mismatch, "upstream gradient ", upstream.shape(),
                " does not match latent ", noisy.shape());
    const auto state = encode_text(instruction);
    const auto gain = static_cast<float>(posterior_gain(t));
    const auto signal = static_cast<float>(schedule().signal_coefficient(t));

    Eigen::Matrix4f d_a = Eigen::Matrix4f::Zero();
    Eigen::Vector4f d_b = Eigen::Vector4f::Zero();
    const auto& shape = noisy.shape();
    for (int y = 0; y < shape.height; ++y) {
        for (int x = 0; x < shape.width; ++x) {
            Eigen::Vector4f c;
            Eigen::Vector4f d_mu;
            for (int k = 0; k < 4; ++k) {
                c[k] = cond.at(k, y, x);
                d_mu[k] = -gain * signal * upstream.at(k, y, x);
            }
            d_a += d_mu * c.transpose();
            d_b += d_mu;
        }
    }
    Eigen::VectorXf d_flat(16);
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            d_flat[4 * i + j] = d_a(i, j);
        }
    }
    const Eigen::VectorXf d_output = m_wa.transpose() * d_flat + m_wb.transpose() * d_b;
    return spread_to_rows(instruction, pooled_backward(state, d_output));
}

ClipVector MiniBackend::embed_instruction_text(const InstructionEmbedding& instruction) const {
    VISII_CHECK(instruction.width() == config().text_width, ErrorCode::shape_mismatch, "instruction width ",
                instruction.width(), " does not match backend width ", config().text_width);
    const auto state = encode_text(instruction);
    return ClipVector::unit(m_projection * state.output);
}

EmbeddingRows MiniBackend::embed_instruction_text_backward(const InstructionEmbedding& instruction,
                                                           const Eigen::VectorXf& upstream) const {
    VISII_CHECK(upstream.size() == config().embedding_width, ErrorCode::shape_mismatch, "upstream width ",
                upstream.size(), " does not match embedding width ", config().embedding_width);
    const auto state = encode_text(instruction);
    const Eigen::VectorXf v = m_projection * state.output;
    const float norm = v.norm();
    VISII_CHECK(norm > 0.0f, ErrorCode::degenerate, "text embedding has zero length");
    const Eigen::VectorXf y = v / norm;
    const Eigen::VectorXf d_v = (upstream - y * y.dot(upstream)) / norm;
    return spread_to_rows(instruction, pooled_backward(state, m_projection.transpose() * d_v));
}

std::vector<int> MiniBackend::tokenize_content(std::string_view text) const { return m_tokenizer.encode_content(text); }

EmbeddingRows MiniBackend::token_embeddings(std::span<const int> ids) const {
    EmbeddingRows rows(static_cast<Eigen::Index>(ids.size()), config().text_width);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        VISII_CHECK(ids[i] >= 0 && ids[i] < kVocabSize, ErrorCode::out_of_range, "token id ", ids[i],
                    " outside vocabulary");
        rows.row(static_cast<Eigen::Index>(i)) = m_token_table.row(ids[i]);
    }
    return rows;
}

std::vector<std::string> MiniBackend::caption_vocabulary() const { return lexicon_words(); }

nlohmann::json MiniBackend::export_weights() const {
    nlohmann::json lex = nlohmann::json::array();
    for (const auto& entry : lexicon()) {
        lex.push_back({{"word", entry.word}, {"rgb", entry.rgb}});
    }
    return {
        {"config", config().to_json()},
        {"tokenizer",
         {{"vocab_size", kVocabSize},
          {"pad", WordTokenizer::kPad},
          {"sot", WordTokenizer::kStartOfText},
          {"eot", WordTokenizer::kEndOfText},
          {"context_length", kContextLength},
          {"lexicon", lex}}},
        {"token_table", matrix_json(m_token_table)},
        {"positional", matrix_json(m_positional)},
        {"w1", matrix_json(m_w1)},
        {"b1", std::vector<float>(m_b1.data(), m_b1.data() + m_b1.size())},
        {"w2", matrix_json(m_w2)},
        {"projection", matrix_json(m_projection)},
        {"image",
         {{"origin", m_feature_origin},
          {"scale", m_feature_scale},
          {"projection", matrix_json(m_image_projection)},
          {"bias", std::vector<float>(m_image_bias.data(), m_image_bias.data() + m_image_bias.size())}}},
    };
}

}  // namespace visii
