// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"
#include "visii/captioner.hpp"
#include "visii/demo_images.hpp"
#include "visii/errors.hpp"
#include "visii/instruction_io.hpp"
#include "visii/inversion.hpp"

namespace visii {
namespace {

using test::linear;
using test::mini;
using test::rows_bitwise_equal;
using test::solid;

/// Linear backend whose denoiser can be forced to return the true noise
/// (given the clean target) or NaN; everything else is delegated.
class ScriptedBackend final : public Backend {
public:
    enum class Mode { oracle, nan_after };

    ScriptedBackend(Mode mode, LatentImage target, int nan_after = 0)
        : Backend(BackendConfig::linear()), m_inner(BackendConfig::linear()), m_mode(mode),
          m_target(std::move(target)), m_nan_after(nan_after) {
        build_null_instruction();
    }

    LatentImage encode_image(const Image& image) const override { return m_inner.encode_image(image); }
    Image decode_latent(const LatentImage& latent) const override { return m_inner.decode_latent(latent); }

    NoiseEstimate predict_noise(const LatentImage& noisy, int t, const InstructionEmbedding& instruction,
                                const LatentImage& cond) const override {
        if (m_mode == Mode::nan_after && m_calls++ >= m_nan_after) {
            NoiseEstimate out(noisy.shape());
            out.values().setConstant(std::numeric_limits<float>::quiet_NaN());
            return out;
        }
        if (m_mode == Mode::nan_after) {
            return m_inner.predict_noise(noisy, t, instruction, cond);
        }
        const auto a = static_cast<float>(schedule().signal_coefficient(t));
        const auto s = static_cast<float>(schedule().noise_coefficient(t));
        return NoiseEstimate(noisy.shape(), (noisy.values() - a * m_target.values()) / s);
    }
    EmbeddingRows predict_noise_backward(const LatentImage& noisy, int t, const InstructionEmbedding& instruction,
                                         const LatentImage& cond, const LatentImage& upstream) const override {
        if (m_mode == Mode::nan_after) {
            return m_inner.predict_noise_backward(noisy, t, instruction, cond, upstream);
        }
        return EmbeddingRows::Zero(77, instruction.width());
    }
    ClipVector embed_image(const Image& image) const override { return m_inner.embed_image(image); }
    ClipVector embed_instruction_text(const InstructionEmbedding& instruction) const override {
        return m_inner.embed_instruction_text(instruction);
    }
    EmbeddingRows embed_instruction_text_backward(const InstructionEmbedding& instruction,
                                                  const Eigen::VectorXf& upstream) const override {
        return m_inner.embed_instruction_text_backward(instruction, upstream);
    }
    std::vector<int> tokenize_content(std::string_view text) const override { return m_inner.tokenize_content(text); }
    EmbeddingRows token_embeddings(std::span<const int> ids) const override { return m_inner.token_embeddings(ids); }
    int start_token() const override { return m_inner.start_token(); }
    int end_token() const override { return m_inner.end_token(); }
    int pad_token() const override { return m_inner.pad_token(); }

private:
    LinearBackend m_inner;
    Mode m_mode;
    LatentImage m_target;
    int m_nan_after;
    mutable int m_calls = 0;
};

std::vector<TrainingPair> one_pair(int size = 32) {
    const auto before = demo_scene(0, size);
    return {{before, apply_pixel_edit(before, PixelEdit::sepia)}};
}

std::vector<TrainingPair> linear_pair() { return {{solid(1, 1, {200, 40, 30}), solid(1, 1, {40, 60, 220})}}; }

InversionConfig quick(int steps) {
    InversionConfig config;
    config.n_steps = steps;
    config.init_source = InitSource::user_text;
    config.init_text = "warm sepia photo";
    return config;
}

TEST(EditDirection, IdenticalPairIsDegenerate) {
    const auto image = demo_scene(0);
    try {
        compute_edit_direction(mini(), {{image, image}});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::degenerate);
    }
}

TEST(EditDirection, SinglePairIsNormalizedDifference) {
    const auto pairs = one_pair(64);
    const auto d = compute_edit_direction(mini(), pairs);
    const Eigen::VectorXf raw =
        mini().embed_image(pairs[0].after).values - mini().embed_image(pairs[0].before).values;
    EXPECT_LT((d.delta.values - raw.normalized()).norm(), 1e-6);
    EXPECT_NEAR(d.delta.values.norm(), 1.0, 1e-6);
}

TEST(EditDirection, OppositePairsCancel) {
    const auto a = ClipVector::unit(Eigen::Vector3f(1, 0, 0));
    const auto b = ClipVector::unit(Eigen::Vector3f(0, 1, 0));
    EXPECT_THROW(edit_direction_from_embeddings({{a, b}, {b, a}}), Error);
}

TEST(Loss, ReconstructionLossTrivialCases) {
    const LatentShape shape{4, 1, 1};
    LatentImage eps(shape);
    eps.values() << 1, 0, 0, 0;
    EXPECT_EQ(reconstruction_loss(eps, eps), 0.0);
    EXPECT_DOUBLE_EQ(reconstruction_loss(eps, LatentImage(shape)), 0.25);
}

TEST(Loss, ReconstructionLossMatchesBruteForce) {
    std::mt19937 rng(11);
    std::normal_distribution<float> dist;
    const LatentShape shape{2, 2, 2};
    LatentImage a(shape), b(shape);
    for (int i = 0; i < 8; ++i) {
        a.values()[i] = dist(rng);
        b.values()[i] = dist(rng);
    }
    double sum = 0;
    for (int i = 0; i < 8; ++i) {
        const double r = static_cast<double>(a.values()[i]) - b.values()[i];
        sum += r * r;
    }
    EXPECT_NEAR(reconstruction_loss(a, b), sum / 8.0, 1e-7);
}

TEST(Loss, CosineDistanceCases) {
    const Eigen::Vector3f v(0.3f, -0.2f, 0.9f);
    EXPECT_NEAR(cosine_distance(v, v), 0.0, 1e-7);
    EXPECT_NEAR(cosine_distance(v, -v), 2.0, 1e-7);
    EXPECT_NEAR(cosine_distance(Eigen::Vector3f(1, 0, 0), Eigen::Vector3f(0, 1, 0)), 1.0, 1e-7);
}

TEST(Loss, AlignmentLossAgainstOwnEmbedding) {
    const auto instruction = init_from_text(mini(), "golden warm");
    EditDirection same{mini().embed_instruction_text(instruction), {}};
    EXPECT_NEAR(clip_alignment_loss(mini(), instruction, same), 0.0, 1e-6);
    EditDirection opposite{ClipVector::unit(-same.delta.values), {}};
    EXPECT_NEAR(clip_alignment_loss(mini(), instruction, opposite), 2.0, 1e-6);
}

TEST(InversionConfig, DefaultsAndStrictJson) {
    const InversionConfig config;
    EXPECT_EQ(config.n_steps, 1000);
    EXPECT_EQ(config.n_timesteps, 1000);
    EXPECT_EQ(config.lambda_mse, 4.0);
    EXPECT_EQ(config.lambda_clip, 0.1);
    EXPECT_EQ(config.learning_rate, 1e-3);
    EXPECT_EQ(InversionConfig::from_json(config.to_json()).hash(), config.hash());
    EXPECT_THROW(InversionConfig::from_json({{"lambda_msee", 1}}), Error);
    auto partial = InversionConfig::from_json({{"n_steps", 5}});
    EXPECT_EQ(partial.n_steps, 5);
    EXPECT_EQ(partial.lambda_mse, 4.0);
    InversionConfig bad;
    bad.n_timesteps = 2000;
    EXPECT_THROW(bad.validate(&mini()), Error);
    bad = InversionConfig{};
    bad.learning_rate = -1;
    EXPECT_THROW(bad.validate(), Error);
}

TEST(Inversion, ZeroStepsReturnsInitialization) {
    const auto pairs = one_pair();
    const auto result = invert(mini(), pairs, quick(0));
    EXPECT_TRUE(result.history.empty());
    EXPECT_TRUE(rows_bitwise_equal(result.instruction.rows(), init_from_text(mini(), "warm sepia photo").rows()));
    EXPECT_EQ(result.instruction.metadata().model_id, "visii-mini-v1");
}

TEST(Inversion, FreezeInvariantAndLossComposition) {
    const auto pairs = one_pair();
    const auto init = init_from_text(mini(), "warm sepia photo");
    const auto result = invert(mini(), pairs, quick(50));
    ASSERT_EQ(result.history.size(), 50u);
    const auto& rows = result.instruction.rows();
    const int hi = result.instruction.trainable_hi();
    EXPECT_TRUE(rows_bitwise_equal(rows.topRows(1), init.rows().topRows(1)));
    EXPECT_TRUE(rows_bitwise_equal(rows.bottomRows(77 - hi), init.rows().bottomRows(77 - hi)));
    for (int r = 1; r < hi; ++r) {
        EXPECT_NE(rows.row(r), init.rows().row(r)) << "row " << r;
    }
    for (const auto& step : result.history) {
        EXPECT_NEAR(step.total, 4.0 * step.mse + 0.1 * step.clip, 1e-6);
        EXPECT_GE(step.t, 0);
        EXPECT_LT(step.t, 1000);
    }
}

TEST(Inversion, DeterministicAcrossRuns) {
    const auto pairs = one_pair();
    auto config = quick(30);
    config.seed = 99;
    const auto a = invert(mini(), pairs, config);
    const auto b = invert(mini(), pairs, config);
    EXPECT_TRUE(rows_bitwise_equal(a.instruction.rows(), b.instruction.rows()));
    config.seed = 100;
    EXPECT_FALSE(rows_bitwise_equal(a.instruction.rows(), invert(mini(), pairs, config).instruction.rows()));
}

TEST(Inversion, AblationMatchesZeroClipWeight) {
    const auto pairs = one_pair();
    auto off = quick(20);
    off.use_clip_loss = false;
    auto zero = quick(20);
    zero.lambda_clip = 0.0;
    const auto a = invert(mini(), pairs, off);
    const auto b = invert(mini(), pairs, zero);
    EXPECT_TRUE(rows_bitwise_equal(a.instruction.rows(), b.instruction.rows()));
    for (const auto& step : a.history) {
        EXPECT_EQ(step.clip, 0.0);
    }
}

TEST(Inversion, ClipOnlyUpdatesWhenResidualIsForcedToZero) {
    const auto pairs = linear_pair();
    const ScriptedBackend backend(ScriptedBackend::Mode::oracle, linear().encode_image(pairs[0].after));
    auto config = quick(25);
    config.init_text = "red green";
    const auto result = invert(backend, pairs, config);
    for (const auto& step : result.history) {
        EXPECT_LT(step.mse, 1e-10);
    }
    // Only the alignment term moves the rows, so it must fall.
    EXPECT_LT(result.history.back().clip, result.history.front().clip);
}

TEST(Inversion, MultiPairSamplingIsBalanced) {
    const std::vector<TrainingPair> pairs = {linear_pair()[0], {solid(1, 1, {10, 200, 10}), solid(1, 1, {90, 90, 90})}};
    auto config = quick(400);
    config.init_text = "blue";
    const auto result = invert(linear(), pairs, config);
    int first = 0;
    for (const auto& step : result.history) {
        first += step.pair_index == 0;
    }
    EXPECT_LE(std::abs(first - 200), 4 * std::sqrt(400.0) / 2);
}

TEST(Inversion, FreshNoiseRecordsStreams) {
    const auto pairs = one_pair();
    auto config = quick(10);
    config.fresh_noise_per_step = true;
    const auto result = invert(mini(), pairs, config);
    const auto& streams = result.instruction.metadata().noise_streams;
    EXPECT_FALSE(streams.empty());
    for (const auto& step : result.history) {
        ASSERT_TRUE(streams.count(step.t));
    }
    EXPECT_TRUE(invert(mini(), pairs, quick(10)).instruction.metadata().noise_streams.empty());
}

TEST(Inversion, NonFiniteLossAbortsWithHistory) {
    const auto pairs = linear_pair();
    const ScriptedBackend backend(ScriptedBackend::Mode::nan_after, {}, 3);
    auto config = quick(10);
    config.init_text = "red";
    try {
        invert(backend, pairs, config);
        FAIL();
    } catch (const InversionAborted& e) {
        EXPECT_EQ(e.code(), ErrorCode::numerical);
        EXPECT_EQ(e.history().size(), 3u);
    }
}

TEST(Inversion, RejectsMismatchedPairSizesAndEmptyInput) {
    EXPECT_THROW(invert(mini(), {}, quick(1)), Error);
    EXPECT_THROW(invert(mini(), {{demo_scene(0, 32), demo_scene(0, 64)}}, quick(1)), Error);
}

TEST(Inversion, CaptionerInitializationAndFallback) {
    const auto pairs = one_pair();
    InversionConfig config;
    config.n_steps = 0;
    StaticCaptioner captioner("a b c");
    InversionHooks hooks;
    hooks.captioner = &captioner;
    const auto result = invert(mini(), pairs, config, hooks);
    EXPECT_EQ(result.instruction.k(), 10);

    // No vocabulary on the linear backend: fall back to init_text when given, fail otherwise.
    InversionConfig fallback;
    fallback.n_steps = 0;
    fallback.init_text = "red";
    EXPECT_EQ(invert(linear(), linear_pair(), fallback).instruction.k(), 1);
    fallback.init_text.clear();
    EXPECT_THROW(invert(linear(), linear_pair(), fallback), Error);
}

TEST(Inversion, HistoryCsvAndCheckpoint) {
    std::vector<LossBreakdown> history = {{0, 5, 0, 1.5, 0.25, 5.0}, {1, 7, 0, 1.0, 0.2, 2.0}, {2, 9, 0, 0.5, 0.1, 1.0}};
    const auto csv = loss_history_csv(history);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "step,t,total,mse,clip");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);

    test::TempDir dir;
    const auto result = invert(mini(), one_pair(), quick(3));
    checkpoint(result.instruction, result.history, dir / "run.visii");
    EXPECT_TRUE(std::filesystem::exists(dir / "run.visii"));
    EXPECT_EQ(loss_csv_path(dir / "run.visii"), dir / "run.loss.csv");
    EXPECT_EQ(test::read_text(dir / "run.loss.csv"), loss_history_csv(result.history));
    EXPECT_TRUE(rows_bitwise_equal(load_instruction(dir / "run.visii").rows(), result.instruction.rows()));
}

TEST(Inversion, ReconstructionTermFallsOnMiniBackend) {
    const auto result = invert(mini(), one_pair(), quick(200));
    double first = 0, last = 0;
    for (int i = 0; i < 20; ++i) {
        first += result.history[static_cast<std::size_t>(i)].mse;
        last += result.history[result.history.size() - 1 - static_cast<std::size_t>(i)].mse;
    }
    EXPECT_LT(last, first);
}

}  // namespace
}  // namespace visii
