// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/backend.hpp"

#include <cstdlib>
#include <fstream>
#include <set>

#include "visii/errors.hpp"
#include "visii/linear_backend.hpp"
#include "visii/mini_backend.hpp"

namespace visii {

BackendConfig BackendConfig::mini() { return BackendConfig{}; }

BackendConfig BackendConfig::linear() {
    BackendConfig config;
    config.model_id = "visii-linear-v1";
    config.kind = "linear";
    config.latent_channels = 4;
    config.downscale = 1;
    config.text_width = 8;
    config.embedding_width = 3;
    config.native_resolution = 1;
    config.reconstruction_tolerance = 1.0;
    config.weights_seed = 7;
    return config;
}

namespace {

template <typename T>
void read_field(const nlohmann::json& json, const char* name, T& field) {
    if (auto it = json.find(name); it != json.end()) {
        try {
            field = it->get<T>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::format, "backend config field '", name, "': ", e.what());
        }
    }
}

}  // namespace

BackendConfig BackendConfig::from_json(const nlohmann::json& json) {
    VISII_CHECK(json.is_object(), ErrorCode::format, "backend config must be a JSON object");
    static const std::set<std::string> known = {
        "model_id",  "kind",       "latent_channels", "downscale",  "text_width",
        "embedding_width", "timesteps", "native_resolution", "beta_start", "beta_end",
        "reconstruction_tolerance", "null_text", "null_image", "weights_seed", "data_spread"};
    for (const auto& item : json.items()) {
        VISII_CHECK(known.count(item.key()) == 1, ErrorCode::format, "unknown backend config field '", item.key(),
                    "'");
    }
    const std::string kind = json.value("kind", std::string("mini"));
    BackendConfig config;
    if (kind == "mini") {
        config = mini();
    } else if (kind == "linear") {
        config = linear();
    } else {
        fail(ErrorCode::format, "unknown backend kind '", kind, "'");
    }
    read_field(json, "model_id", config.model_id);
    read_field(json, "latent_channels", config.latent_channels);
    read_field(json, "downscale", config.downscale);
    read_field(json, "text_width", config.text_width);
    read_field(json, "embedding_width", config.embedding_width);
    read_field(json, "timesteps", config.timesteps);
    read_field(json, "native_resolution", config.native_resolution);
    read_field(json, "beta_start", config.beta_start);
    read_field(json, "beta_end", config.beta_end);
    read_field(json, "reconstruction_tolerance", config.reconstruction_tolerance);
    read_field(json, "null_text", config.null_text);
    read_field(json, "null_image", config.null_image);
    read_field(json, "weights_seed", config.weights_seed);
    read_field(json, "data_spread", config.data_spread);
    VISII_CHECK(config.null_image == "zeros", ErrorCode::format, "unsupported null_image convention '",
                config.null_image, "'");
    return config;
}

nlohmann::json BackendConfig::to_json() const {
    return {
        {"model_id", model_id},
        {"kind", kind},
        {"latent_channels", latent_channels},
        {"downscale", downscale},
        {"text_width", text_width},
        {"embedding_width", embedding_width},
        {"timesteps", timesteps},
        {"native_resolution", native_resolution},
        {"beta_start", beta_start},
        {"beta_end", beta_end},
        {"reconstruction_tolerance", reconstruction_tolerance},
        {"null_text", null_text},
        {"null_image", null_image},
        {"weights_seed", weights_seed},
        {"data_spread", data_spread},
    };
}

BackendConfig BackendConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    VISII_CHECK(in.is_open(), ErrorCode::io, "cannot open backend config ", path.string());
    nlohmann::json json;
    try {
        json = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::format, "backend config ", path.string(), ": ", e.what());
    }
    return from_json(json);
}

Backend::Backend(BackendConfig config)
    : m_config(std::move(config)),
      m_schedule(NoiseSchedule::scaled_linear(m_config.timesteps, m_config.beta_start, m_config.beta_end)) {
    VISII_CHECK(m_config.latent_channels > 0 && m_config.downscale > 0 && m_config.text_width > 0 &&
                    m_config.embedding_width > 0,
                ErrorCode::invalid_argument, "backend geometry must be positive");
}

LatentShape Backend::latent_shape_for(int width, int height) const {
    const int f = m_config.downscale;
    VISII_CHECK(width > 0 && height > 0 && width % f == 0 && height % f == 0, ErrorCode::dimension_mismatch,
                "image size ", width, "x", height, " is not a multiple of the latent downscale factor ", f);
    return LatentShape{m_config.latent_channels, height / f, width / f};
}

LatentImage Backend::add_noise(const LatentImage& latent, const LatentImage& noise, int t) const {
    return m_schedule.add_noise(latent, noise, t);
}

NoiseEstimate Backend::guided_predict(const LatentImage& noisy, int t, const InstructionEmbedding& instruction,
                                      const LatentImage& cond, double text_scale, double image_scale) const {
    VISII_CHECK(text_scale >= 1.0 && image_scale >= 1.0, ErrorCode::invalid_argument,
                "guidance scales must be >= 1, got text ", text_scale, " image ", image_scale);
    if (text_scale == 1.0 && image_scale == 1.0) {
        return predict_noise(noisy, t, instruction, cond);
    }
    const auto& null_text = null_instruction();
    const auto null_cond = null_condition(cond.shape());
    const auto full = predict_noise(noisy, t, instruction, cond);
    const auto image_only = predict_noise(noisy, t, null_text, cond);
    const auto unconditional = predict_noise(noisy, t, null_text, null_cond);

    const auto s_text = static_cast<float>(text_scale);
    const auto s_image = static_cast<float>(image_scale);
    Eigen::ArrayXf guided = unconditional.values() + s_image * (image_only.values() - unconditional.values()) +
                            s_text * (full.values() - image_only.values());
    return NoiseEstimate(noisy.shape(), std::move(guided));
}

std::vector<int> Backend::tokenize(std::string_view text) const {
    auto content = tokenize_content(text);
    VISII_CHECK(static_cast<int>(content.size()) <= kMaxContentTokens, ErrorCode::overflow, "text has ",
                content.size(), " content tokens, capacity is ", kMaxContentTokens);
    std::vector<int> ids;
    ids.reserve(kContextLength);
    ids.push_back(start_token());
    ids.insert(ids.end(), content.begin(), content.end());
    ids.push_back(end_token());
    ids.resize(kContextLength, pad_token());
    return ids;
}

const InstructionEmbedding& Backend::null_instruction() const {
    VISII_CHECK(m_null_instruction.has_value(), ErrorCode::backend, "backend did not build its null instruction");
    return *m_null_instruction;
}

void Backend::build_null_instruction() {
    const auto ids = tokenize(m_config.null_text);
    const auto content = static_cast<int>(tokenize_content(m_config.null_text).size());
    InstructionMetadata metadata;
    metadata.model_id = m_config.model_id;
    m_null_instruction = InstructionEmbedding::frozen(token_embeddings(ids), content, 0, std::move(metadata));
}

void Backend::check_prediction_inputs(const LatentImage& noisy, int t, const InstructionEmbedding& instruction,
                                      const LatentImage& cond) const {
    VISII_CHECK(t >= 0 && t < timesteps(), ErrorCode::out_of_range, "timestep ", t, " outside [0, ", timesteps(),
                ")");
    VISII_CHECK(noisy.shape() == cond.shape(), ErrorCode::shape_mismatch, "conditioning latent ", cond.shape(),
                " does not match noisy latent ", noisy.shape());
    VISII_CHECK(noisy.shape().channels == m_config.latent_channels, ErrorCode::shape_mismatch, "latent has ",
                noisy.shape().channels, " channels, backend expects ", m_config.latent_channels);
    VISII_CHECK(instruction.rows().rows() == kContextLength && instruction.width() == m_config.text_width,
                ErrorCode::shape_mismatch, "instruction is ", instruction.rows().rows(), "x", instruction.width(),
                ", backend expects ", kContextLength, "x", m_config.text_width);
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
    if (config.kind == "mini") {
        return std::make_unique<MiniBackend>(config);
    }
    if (config.kind == "linear") {
        return std::make_unique<LinearBackend>(config);
    }
    fail(ErrorCode::backend, "unknown backend kind '", config.kind, "'");
}

std::unique_ptr<Backend> load_backend_from_env() {
    const char* path = std::getenv(kBackendConfigEnv);
    if (path == nullptr || *path == '\0') {
        return make_backend(BackendConfig::mini());
    }
    try {
        return make_backend(BackendConfig::load(path));
    } catch (const Error& e) {
        fail(ErrorCode::backend, "failed to load backend from ", path, ": ", e.what());
    }
}

}  // namespace visii
