// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/inversion.hpp"

#include <cmath>
#include <cstdio>
#include <ctime>
#include <set>

#include "visii/adamw.hpp"
#include "visii/captioner.hpp"
#include "visii/instruction_io.hpp"
#include "visii/io.hpp"
#include "visii/noise_plan.hpp"
#include "visii/philox.hpp"
#include "visii/tokenizer.hpp"

namespace visii {

namespace {

std::string_view to_string(InitSource source) { return source == InitSource::user_text ? "user_text" : "captioner"; }

template <typename T>
void read_field(const nlohmann::json& json, const char* name, T& field) {
    if (auto it = json.find(name); it != json.end()) {
        try {
            field = it->get<T>();
        } catch (const nlohmann::json::exception& e) {
            fail(ErrorCode::invalid_argument, "inversion config field '", name, "': ", e.what());
        }
    }
}

void check_common(const InversionConfig& c, const Backend* backend) {
    VISII_CHECK(c.n_timesteps >= 1, ErrorCode::invalid_argument, "n_timesteps must be >= 1, got ", c.n_timesteps);
    VISII_CHECK(c.lambda_mse >= 0 && c.lambda_clip >= 0, ErrorCode::invalid_argument,
                "loss weights must be non-negative");
    VISII_CHECK(c.learning_rate >= 0 && c.weight_decay >= 0, ErrorCode::invalid_argument,
                "learning rate and weight decay must be non-negative");
    VISII_CHECK(c.beta1 >= 0 && c.beta1 < 1 && c.beta2 >= 0 && c.beta2 < 1 && c.epsilon > 0,
                ErrorCode::invalid_argument, "invalid optimizer moments");
    VISII_CHECK(!c.k || (*c.k >= 1 && *c.k <= kMaxContentTokens), ErrorCode::invalid_argument, "k must lie in [1, ",
                kMaxContentTokens, "]");
    VISII_CHECK(c.init_source != InitSource::user_text || !c.init_text.empty(), ErrorCode::invalid_argument,
                "init_source user_text needs init_text");
    if (backend != nullptr) {
        VISII_CHECK(c.n_timesteps == backend->timesteps(), ErrorCode::invalid_argument, "n_timesteps ",
                    c.n_timesteps, " does not match the backend scheduler (", backend->timesteps(), ")");
    }
}

}  // namespace

void InversionConfig::validate(const Backend* backend) const {
    VISII_CHECK(n_steps >= 1, ErrorCode::invalid_argument, "n_steps must be >= 1, got ", n_steps);
    check_common(*this, backend);
}

nlohmann::json InversionConfig::to_json() const {
    return {
        {"n_steps", n_steps},
        {"n_timesteps", n_timesteps},
        {"lambda_mse", lambda_mse},
        {"lambda_clip", lambda_clip},
        {"learning_rate", learning_rate},
        {"weight_decay", weight_decay},
        {"beta1", beta1},
        {"beta2", beta2},
        {"epsilon", epsilon},
        {"seed", seed},
        {"use_clip_loss", use_clip_loss},
        {"init_source", to_string(init_source)},
        {"init_text", init_text},
        {"k", k ? nlohmann::json(*k) : nlohmann::json(nullptr)},
        {"fresh_noise_per_step", fresh_noise_per_step},
    };
}

InversionConfig InversionConfig::from_json(const nlohmann::json& json) {
    VISII_CHECK(json.is_object(), ErrorCode::invalid_argument, "inversion config must be a JSON object");
    static const std::set<std::string> known = {
        "n_steps", "n_timesteps", "lambda_mse", "lambda_clip",   "learning_rate", "weight_decay", "beta1", "beta2",
        "epsilon", "seed",        "use_clip_loss", "init_source", "init_text", "k", "fresh_noise_per_step"};
    for (const auto& item : json.items()) {
        VISII_CHECK(known.count(item.key()) == 1, ErrorCode::invalid_argument, "unknown inversion config field '",
                    item.key(), "'");
    }
    InversionConfig c;
    read_field(json, "n_steps", c.n_steps);
    read_field(json, "n_timesteps", c.n_timesteps);
    read_field(json, "lambda_mse", c.lambda_mse);
    read_field(json, "lambda_clip", c.lambda_clip);
    read_field(json, "learning_rate", c.learning_rate);
    read_field(json, "weight_decay", c.weight_decay);
    read_field(json, "beta1", c.beta1);
    read_field(json, "beta2", c.beta2);
    read_field(json, "epsilon", c.epsilon);
    read_field(json, "seed", c.seed);
    read_field(json, "use_clip_loss", c.use_clip_loss);
    read_field(json, "init_text", c.init_text);
    read_field(json, "fresh_noise_per_step", c.fresh_noise_per_step);
    if (auto it = json.find("k"); it != json.end() && !it->is_null()) {
        int k = 0;
        read_field(json, "k", k);
        c.k = k;
    }
    if (auto it = json.find("init_source"); it != json.end()) {
        std::string source;
        read_field(json, "init_source", source);
        if (source == "user_text") {
            c.init_source = InitSource::user_text;
        } else if (source == "captioner") {
            c.init_source = InitSource::captioner;
        } else {
            fail(ErrorCode::invalid_argument, "unknown init_source '", source, "'");
        }
    }
    return c;
}

std::string InversionConfig::hash() const {
    const auto value = WordTokenizer::fnv1a(to_json().dump());
    char buffer[17];
    std::snprintf(buffer, sizeof(buffer), "%016llx", static_cast<unsigned long long>(value));
    return buffer;
}

EditDirection edit_direction_from_embeddings(const std::vector<std::pair<ClipVector, ClipVector>>& pairs) {
    VISII_CHECK(!pairs.empty(), ErrorCode::invalid_argument, "edit direction needs at least one pair");
    EditDirection direction;
    const auto width = pairs.front().first.values.size();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(width);
    for (const auto& [before, after] : pairs) {
        VISII_CHECK(before.values.size() == width && after.values.size() == width, ErrorCode::shape_mismatch,
                    "embedding widths differ across pairs");
        direction.per_pair.push_back(after.values - before.values);
        sum += direction.per_pair.back().cast<double>();
    }
    const Eigen::VectorXd mean = sum / static_cast<double>(pairs.size());
    VISII_CHECK(mean.squaredNorm() > 0.0, ErrorCode::degenerate,
                "degenerate edit direction: before and after embeddings cancel");
    direction.delta = ClipVector{(mean / mean.norm()).cast<float>(), true};
    return direction;
}

EditDirection compute_edit_direction(const Backend& backend, const std::vector<TrainingPair>& pairs) {
    VISII_CHECK(!pairs.empty(), ErrorCode::invalid_argument, "edit direction needs at least one pair");
    std::vector<std::pair<ClipVector, ClipVector>> embedded;
    embedded.reserve(pairs.size());
    for (const auto& pair : pairs) {
        embedded.emplace_back(backend.embed_image(pair.before), backend.embed_image(pair.after));
    }
    return edit_direction_from_embeddings(embedded);
}

double reconstruction_loss(const LatentImage& noise, const NoiseEstimate& estimate) {
    VISII_CHECK(noise.shape() == estimate.shape(), ErrorCode::shape_mismatch, "noise shape ", noise.shape(),
                " does not match estimate shape ", estimate.shape());
    VISII_CHECK(noise.size() > 0, ErrorCode::invalid_argument, "reconstruction loss of an empty latent");
    double sum = 0.0;
    for (Eigen::Index i = 0; i < noise.values().size(); ++i) {
        const double r = static_cast<double>(noise.values()[i]) - estimate.values()[i];
        sum += r * r;
    }
    return sum / static_cast<double>(noise.size());
}

double cosine_distance(const Eigen::VectorXf& a, const Eigen::VectorXf& b) { return 1.0 - cosine_similarity(a, b); }

double clip_alignment_loss(const Backend& backend, const InstructionEmbedding& instruction,
                           const EditDirection& direction) {
    return cosine_distance(backend.embed_instruction_text(instruction).values, direction.delta.values);
}

LossAndGradient loss_and_gradient(const Backend& backend, const InstructionEmbedding& instruction,
                                  const LatentImage& cond, const LatentImage& target, const LatentImage& noise, int t,
                                  const EditDirection* direction, const LossTerms& terms) {
    const auto noisy = backend.add_noise(target, noise, t);
    const auto estimate = backend.predict_noise(noisy, t, instruction, cond);

    LossAndGradient out;
    out.loss.t = t;
    out.loss.mse = reconstruction_loss(noise, estimate);

    const auto scale = static_cast<float>(-2.0 * terms.lambda_mse / static_cast<double>(noise.size()));
    const LatentImage upstream(noise.shape(), scale * (noise.values() - estimate.values()));
    out.gradient = backend.predict_noise_backward(noisy, t, instruction, cond, upstream);

    if (terms.use_clip_loss) {
        VISII_CHECK(direction != nullptr, ErrorCode::invalid_argument, "alignment loss needs an edit direction");
        out.loss.clip = clip_alignment_loss(backend, instruction, *direction);
        if (terms.lambda_clip != 0.0) {
            const Eigen::VectorXf d_text = static_cast<float>(-terms.lambda_clip) * direction->delta.values;
            out.gradient += backend.embed_instruction_text_backward(instruction, d_text);
        }
    }
    out.loss.total = terms.lambda_mse * out.loss.mse + terms.lambda_clip * out.loss.clip;
    return out;
}

InstructionEmbedding initialize_instruction(const Backend& backend, const std::vector<TrainingPair>& pairs,
                                            const InversionConfig& config, Captioner* captioner) {
    VISII_CHECK(!pairs.empty(), ErrorCode::invalid_argument, "inversion needs at least one before/after pair");
    if (config.init_source == InitSource::captioner) {
        try {
            RetrievalCaptioner retrieval(backend);
            Captioner& source = captioner != nullptr ? *captioner : retrieval;
            return init_from_captioner(backend, pairs.front().after, source, config.k.value_or(kDefaultCaptionTokens));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::captioner_unavailable || config.init_text.empty()) {
                throw;
            }
        }
    }
    return init_from_text(backend, config.init_text, config.k);
}

InversionResult invert(const Backend& backend, const std::vector<TrainingPair>& pairs, const InversionConfig& config,
                       const InversionHooks& hooks) {
    VISII_CHECK(config.n_steps >= 0, ErrorCode::invalid_argument, "n_steps must be >= 0");
    check_common(config, &backend);
    VISII_CHECK(!pairs.empty(), ErrorCode::invalid_argument, "inversion needs at least one before/after pair");

    std::vector<LatentImage> before_latents;
    std::vector<LatentImage> after_latents;
    for (const auto& pair : pairs) {
        VISII_CHECK(pair.before.width == pair.after.width && pair.before.height == pair.after.height,
                    ErrorCode::dimension_mismatch, "before image is ", pair.before.width, "x", pair.before.height,
                    " but after image is ", pair.after.width, "x", pair.after.height);
        before_latents.push_back(backend.encode_image(pair.before));
        after_latents.push_back(backend.encode_image(pair.after));
    }

    auto instruction = initialize_instruction(backend, pairs, config, hooks.captioner);
    auto& metadata = instruction.metadata();
    metadata.model_id = backend.config().model_id;
    metadata.base_seed = config.seed;
    metadata.config_hash = config.hash();
    metadata.created_at = utc_timestamp();
    metadata.noise_streams.clear();

    std::optional<EditDirection> direction;
    if (config.use_clip_loss) {
        direction = compute_edit_direction(backend, pairs);
    }

    const LossTerms terms{config.lambda_mse, config.lambda_clip, config.use_clip_loss};
    AdamW optimizer({config.learning_rate, config.beta1, config.beta2, config.epsilon, config.weight_decay},
                    instruction.k(), instruction.width());
    const NoisePlan plan(config.seed, config.n_timesteps);
    const auto lo = instruction.trainable_lo();
    const auto count = instruction.trainable_hi() - lo;

    InversionResult result{instruction, {}};
    result.history.reserve(static_cast<std::size_t>(config.n_steps));
    auto& learned = result.instruction;
    for (int step = 0; step < config.n_steps; ++step) {
        const auto words = random_words(config.seed, static_cast<std::uint32_t>(NoiseDomain::sampling),
                                        static_cast<std::uint64_t>(step));
        const std::uint64_t t_draw = (static_cast<std::uint64_t>(words[1]) << 32) | words[0];
        const std::uint64_t pair_draw = (static_cast<std::uint64_t>(words[3]) << 32) | words[2];
        const int t = static_cast<int>(t_draw % static_cast<std::uint64_t>(config.n_timesteps));
        const int pair_index = static_cast<int>(pair_draw % pairs.size());
        const auto& target = after_latents[static_cast<std::size_t>(pair_index)];

        LossAndGradient evaluation;
        try {
            LatentImage noise;
            if (config.fresh_noise_per_step) {
                noise = plan.fresh(static_cast<std::uint64_t>(step), target.shape());
                learned.metadata().noise_streams[t] = static_cast<std::uint64_t>(step);
            } else {
                noise = plan.noise(t, target.shape());
            }
            evaluation = loss_and_gradient(backend, learned, before_latents[static_cast<std::size_t>(pair_index)],
                                           target, noise, t, direction ? &*direction : nullptr, terms);
        } catch (const Error& e) {
            throw InversionAborted(e.code(), detail::concat("inversion aborted at step ", step, ": ", e.what()),
                                   std::move(result.history));
        }
        evaluation.loss.step = step;
        evaluation.loss.pair_index = pair_index;

        const auto grad = evaluation.gradient.middleRows(lo, count);
        if (!std::isfinite(evaluation.loss.total) || !grad.allFinite()) {
            throw InversionAborted(ErrorCode::numerical,
                                   detail::concat("non-finite loss at step ", step, " (t=", t,
                                                  ", mse=", evaluation.loss.mse, ", clip=", evaluation.loss.clip, ")"),
                                   std::move(result.history));
        }
        auto rows = learned.trainable_rows();
        optimizer.step(rows, grad);
        result.history.push_back(evaluation.loss);
        if (hooks.on_step) {
            hooks.on_step(evaluation.loss);
        }
    }
    return result;
}

std::filesystem::path loss_csv_path(const std::filesystem::path& visii_path) {
    return visii_path.parent_path() / (visii_path.stem().string() + ".loss.csv");
}

std::string loss_history_csv(const std::vector<LossBreakdown>& history) {
    std::string csv = "step,t,total,mse,clip\n";
    char line[160];
    for (const auto& row : history) {
        std::snprintf(line, sizeof(line), "%d,%d,%.9g,%.9g,%.9g\n", row.step, row.t, row.total, row.mse, row.clip);
        csv += line;
    }
    return csv;
}

void checkpoint(const InstructionEmbedding& instruction, const std::vector<LossBreakdown>& history,
                const std::filesystem::path& path) {
    save_instruction(instruction, path);
    write_file_atomic(loss_csv_path(path), loss_history_csv(history));
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buffer[32];
    std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buffer;
}

}  // namespace visii
