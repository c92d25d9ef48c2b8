// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"
#include "visii/demo_images.hpp"
#include "visii/errors.hpp"
#include "visii/instruction.hpp"
#include "visii/noise_plan.hpp"
#include "visii/tokenizer.hpp"

namespace visii {
namespace {

using test::linear;
using test::mini;
using test::solid;

double mean_abs_error(const Image& a, const Image& b) {
    double sum = 0;
    for (std::size_t i = 0; i < a.pixels.size(); ++i) {
        sum += std::abs(static_cast<int>(a.pixels[i]) - static_cast<int>(b.pixels[i]));
    }
    return sum / static_cast<double>(a.pixels.size());
}

TEST(BackendConfig, JsonRoundTrip) {
    for (const auto& config : {BackendConfig::mini(), BackendConfig::linear()}) {
        EXPECT_EQ(BackendConfig::from_json(config.to_json()).to_json(), config.to_json());
    }
}

TEST(BackendConfig, UnknownKeysAndNonZeroNullImageAreRejected) {
    auto json = BackendConfig::mini().to_json();
    json["surprise"] = 1;
    EXPECT_THROW(BackendConfig::from_json(json), Error);
    json = BackendConfig::mini().to_json();
    json["null_image"] = "mean";
    EXPECT_THROW(BackendConfig::from_json(json), Error);
}

TEST(MiniBackend, LatentGeometryUsesDownscaleEight) {
    const auto latent = mini().encode_image(solid(512, 512, {10, 20, 30}));
    EXPECT_EQ(latent.shape(), (LatentShape{4, 64, 64}));
    EXPECT_THROW(mini().encode_image(solid(12, 16, {0, 0, 0})), Error);
}

TEST(MiniBackend, EncodeIsDeterministic) {
    const auto black = solid(64, 64, {0, 0, 0});
    EXPECT_TRUE(mini().encode_image(black).bitwise_equal(mini().encode_image(black)));
}

TEST(MiniBackend, RoundTripWithinDeclaredTolerance) {
    for (int i = 0; i < 5; ++i) {
        const auto scene = demo_scene(i, 64);
        const auto decoded = mini().decode_latent(mini().encode_image(scene));
        ASSERT_EQ(decoded.width, scene.width);
        ASSERT_EQ(decoded.height, scene.height);
        EXPECT_LT(mean_abs_error(scene, decoded), mini().config().reconstruction_tolerance) << "scene " << i;
    }
}

TEST(MiniBackend, ZeroLatentDecodesAndDecodingIsDeterministic) {
    const LatentImage zero({4, 8, 8});
    const auto a = mini().decode_latent(zero);
    EXPECT_EQ(a.width, 64);
    EXPECT_EQ(a, mini().decode_latent(zero));
}

TEST(MiniBackend, PredictNoiseIsDeterministicAndShaped) {
    const auto cond = mini().encode_image(demo_scene(0, 32));
    const auto noisy = mini().add_noise(cond, NoisePlan(1, 1000).noise(300, cond.shape()), 300);
    const auto instruction = init_from_text(mini(), "make it warm and golden");
    const auto a = mini().predict_noise(noisy, 300, instruction, cond);
    EXPECT_EQ(a.shape(), noisy.shape());
    EXPECT_TRUE(a.bitwise_equal(mini().predict_noise(noisy, 300, instruction, cond)));
}

TEST(MiniBackend, TrainableCoordinatePerturbationChangesOutput) {
    const auto cond = mini().encode_image(demo_scene(1, 32));
    const auto noisy = mini().add_noise(cond, NoisePlan(2, 1000).noise(500, cond.shape()), 500);
    const auto base = init_from_text(mini(), "warm sepia");
    EmbeddingRows rows = base.rows();
    rows(1, 0) += 1e-3f;
    const InstructionEmbedding bumped(rows, base.k());
    const auto a = mini().predict_noise(noisy, 500, base, cond);
    const auto b = mini().predict_noise(noisy, 500, bumped, cond);
    const double diff = (a.values() - b.values()).abs().maxCoeff();
    EXPECT_GT(diff, 0.0);
    EXPECT_TRUE(std::isfinite(diff));
}

TEST(MiniBackend, GuidanceAtUnitScalesIsPlainPrediction) {
    const auto cond = mini().encode_image(demo_scene(2, 32));
    const auto noisy = mini().add_noise(cond, NoisePlan(3, 1000).noise(700, cond.shape()), 700);
    const auto instruction = init_from_text(mini(), "cool blue tone");
    EXPECT_TRUE(mini()
                    .guided_predict(noisy, 700, instruction, cond, 1.0, 1.0)
                    .bitwise_equal(mini().predict_noise(noisy, 700, instruction, cond)));
}

TEST(MiniBackend, NullInstructionIgnoresTextScale) {
    const auto cond = mini().encode_image(demo_scene(2, 32));
    const auto noisy = mini().add_noise(cond, NoisePlan(3, 1000).noise(200, cond.shape()), 200);
    const auto& null = mini().null_instruction();
    const auto a = mini().guided_predict(noisy, 200, null, cond, 7.5, 1.5);
    const auto b = mini().guided_predict(noisy, 200, null, cond, 2.0, 1.5);
    EXPECT_LT((a.values() - b.values()).abs().maxCoeff(), 1e-6);
}

TEST(MiniBackend, NullInstructionIsEmptyTextLayout) {
    const auto& null = mini().null_instruction();
    EXPECT_EQ(null.k(), 0);
    EXPECT_EQ(null.eot_index(), 1);
    EXPECT_FALSE(null.trainable());
    const auto ids = mini().tokenize("");
    EXPECT_TRUE(test::rows_bitwise_equal(null.rows(), mini().token_embeddings(ids)));
}

TEST(MiniBackend, ImageEmbeddingIsUnitAndDeterministic) {
    const auto scene = demo_scene(3);
    const auto a = mini().embed_image(scene);
    EXPECT_NEAR(a.values.norm(), 1.0, 1e-5);
    EXPECT_EQ(a.values, mini().embed_image(scene).values);
    EXPECT_LT(cosine_similarity(a.values, mini().embed_image(demo_scene(4)).values), 1.0);
}

TEST(MiniBackend, TextEmbeddingIsUnitAndDeterministic) {
    const auto instruction = init_from_text(mini(), "a photo of a dog");
    const auto a = mini().embed_instruction_text(instruction);
    EXPECT_NEAR(a.values.norm(), 1.0, 1e-5);
    EXPECT_EQ(a.values, mini().embed_instruction_text(instruction).values);
}

TEST(MiniBackend, TextIsGroundedInMatchingImages) {
    // The mini backend grounds colour words, so colour captions stand in for object captions.
    const auto red = mini().embed_image(solid(64, 64, {220, 40, 40}));
    const auto blue = mini().embed_image(solid(64, 64, {40, 70, 210}));
    const auto scene = mini().embed_image(demo_scene(0));
    for (const char* text : {"a red photo", "red"}) {
        const auto t = mini().embed_instruction_text(init_from_text(mini(), text)).values;
        EXPECT_GT(cosine_similarity(t, red.values), cosine_similarity(t, blue.values)) << text;
        EXPECT_GT(cosine_similarity(t, red.values), cosine_similarity(t, scene.values)) << text;
    }
}

TEST(MiniBackend, TokenizeLayout) {
    const auto ids = mini().tokenize("");
    ASSERT_EQ(ids.size(), 77u);
    EXPECT_EQ(ids[0], mini().start_token());
    EXPECT_EQ(ids[1], mini().end_token());
    EXPECT_EQ(std::count(ids.begin() + 2, ids.end(), mini().pad_token()), 75);
    EXPECT_EQ(mini().token_embeddings(mini().tokenize("turn it golden")).rows(), 77);
    EXPECT_EQ(mini().tokenize("turn it golden"), mini().tokenize("turn it golden"));
}

TEST(MiniBackend, GradientsAreFiniteForTrainableRows) {
    const auto cond = mini().encode_image(demo_scene(0, 32));
    const auto noise = NoisePlan(9, 1000).noise(100, cond.shape());
    const auto noisy = mini().add_noise(cond, noise, 100);
    const auto instruction = init_from_text(mini(), "dark pale teal");
    const auto g = mini().predict_noise_backward(noisy, 100, instruction, cond, noise);
    const auto h = mini().embed_instruction_text_backward(instruction, Eigen::VectorXf::Ones(16));
    for (int r = instruction.trainable_lo(); r < instruction.trainable_hi(); ++r) {
        EXPECT_TRUE(g.row(r).allFinite());
        EXPECT_TRUE(h.row(r).allFinite());
        EXPECT_GT(g.row(r).norm(), 0.0f);
    }
}

// Directional derivative of <u, f(rows)> along a random direction, central differences in float.
template <typename Forward>
double directional_fd(const InstructionEmbedding& base, const EmbeddingRows& direction, Forward forward) {
    const float h = 1e-2f;
    EmbeddingRows plus = base.rows() + h * direction;
    EmbeddingRows minus = base.rows() - h * direction;
    return (forward(InstructionEmbedding(plus, base.k())) - forward(InstructionEmbedding(minus, base.k()))) / (2 * h);
}

TEST(MiniBackend, BackwardPassesAgreeWithFiniteDifferences) {
    const auto cond = mini().encode_image(demo_scene(1, 32));
    const auto noise = NoisePlan(4, 1000).noise(250, cond.shape());
    const auto noisy = mini().add_noise(cond, noise, 250);
    const auto instruction = init_from_text(mini(), "golden warm light");
    EmbeddingRows direction = EmbeddingRows::Zero(77, 32);
    direction.middleRows(1, instruction.k()) = EmbeddingRows::Random(instruction.k(), 32);

    const auto denoise = [&](const InstructionEmbedding& e) {
        return static_cast<double>((mini().predict_noise(noisy, 250, e, cond).values() * noise.values()).sum());
    };
    const auto g = mini().predict_noise_backward(noisy, 250, instruction, cond, noise);
    const double analytic = (g.array() * direction.array()).sum();
    EXPECT_NEAR(analytic, directional_fd(instruction, direction, denoise), 2e-2 * std::abs(analytic) + 1e-3);

    const Eigen::VectorXf u = Eigen::VectorXf::LinSpaced(16, -1.0f, 1.0f);
    const auto text = [&](const InstructionEmbedding& e) {
        return static_cast<double>(mini().embed_instruction_text(e).values.dot(u));
    };
    const auto gt = mini().embed_instruction_text_backward(instruction, u);
    const double analytic_text = (gt.array() * direction.array()).sum();
    EXPECT_NEAR(analytic_text, directional_fd(instruction, direction, text), 2e-2 * std::abs(analytic_text) + 1e-3);
}

TEST(LinearBackend, GeometryAndDeterminism) {
    const auto image = solid(1, 1, {255, 0, 128});
    const auto latent = linear().encode_image(image);
    EXPECT_EQ(latent.shape(), (LatentShape{4, 1, 1}));
    EXPECT_FLOAT_EQ(latent.at(0, 0, 0), 1.0f);
    EXPECT_FLOAT_EQ(latent.at(1, 0, 0), -1.0f);
    EXPECT_EQ(linear().decode_latent(latent), image);
    EXPECT_EQ(linear().caption_vocabulary(), std::vector<std::string>{});
}

TEST(Backend, FactoryAndEnvironment) {
    EXPECT_EQ(make_backend(BackendConfig::linear())->config().model_id, "visii-linear-v1");
    auto bad = BackendConfig::mini();
    bad.kind = "nope";
    EXPECT_THROW(make_backend(bad), Error);
    bad = BackendConfig::mini();
    bad.downscale = 4;
    EXPECT_THROW(make_backend(bad), Error);
}

}  // namespace
}  // namespace visii
