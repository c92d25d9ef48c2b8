// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdio>

#include <gtest/gtest.h>

#include "json.hpp"

#include "support.hpp"
#include "visii/demo_images.hpp"

namespace visii {
namespace {

struct CliResult {
    int code = -1;
    std::string out;
    std::string err;
};

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        for (int i = 0; i < 3; ++i) {
            const auto scene = demo_scene(i, 32);
            save_png(scene, dir / ("b" + std::to_string(i) + ".png"));
            save_png(apply_pixel_edit(scene, PixelEdit::sepia), dir / ("a" + std::to_string(i) + ".png"));
        }
    }

    CliResult run(const std::string& args, const std::string& env = "") {
        const auto out = dir / "stdout.txt";
        const auto err = dir / "stderr.txt";
        const std::string command = "cd '" + dir.path().string() + "' && " + env + " '" VISII_CLI_PATH "' " + args +
                                    " >'" + out.string() + "' 2>'" + err.string() + "'";
        const int status = std::system(command.c_str());
        CliResult r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.out = test::read_text(out);
        r.err = test::read_text(err);
        return r;
    }

    CliResult invert(const std::string& out, const std::string& extra = "") {
        return run("invert --before b0.png --after a0.png --out " + out + " --steps 5 " + extra);
    }

    test::TempDir dir;
};

TEST_F(CliTest, InvertPrintsDefaultsAndWritesBothArtifacts) {
    const auto r = invert("sepia.visii");
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "N=5 lmse=4 lclip=0.1 lr=0.001");
    EXPECT_TRUE(std::filesystem::exists(dir / "sepia.visii"));
    EXPECT_TRUE(std::filesystem::exists(dir / "sepia.visii.json"));
    const auto csv = test::read_text(dir / "sepia.loss.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
}

TEST_F(CliTest, PairMismatchIsAUsageError) {
    const auto r = run("invert --before b0.png --before b1.png --after a0.png --out x.visii --steps 5");
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("visii: error: ", 0), 0u) << r.err;
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
    EXPECT_FALSE(std::filesystem::exists(dir / "x.visii"));
}

TEST_F(CliTest, MissingImageIsADataError) {
    const auto r = run("invert --before nope.png --after a0.png --out x.visii --steps 5");
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("visii: error: io:"), std::string::npos) << r.err;
}

TEST_F(CliTest, BadBackendConfigIsABackendError) {
    std::ofstream(dir / "backend.json") << R"({"kind": "remote-gpu"})";
    const std::string args = "invert --before b0.png --after a0.png --out x.visii --steps 5";
    EXPECT_EQ(run(args, "VISII_BACKEND_CONFIG=backend.json").code, 2);
    EXPECT_EQ(run("--backend-config backend.json " + args).code, 2);
    const auto r = run(args, "VISII_BACKEND_CONFIG=missing.json");
    EXPECT_EQ(r.code, 2);
    EXPECT_EQ(r.err.rfind("visii: error: backend:", 0), 0u) << r.err;
}

TEST_F(CliTest, ApplyIsDeterministicAndWritesASidecar) {
    ASSERT_EQ(invert("sepia.visii").code, 0);
    const std::string common = "apply --instruction sepia.visii --image b1.png --sampler-steps 10 ";
    ASSERT_EQ(run(common + "--out one.png").code, 0);
    ASSERT_EQ(run(common + "--out two.png").code, 0);
    EXPECT_EQ(test::read_bytes(dir / "one.png"), test::read_bytes(dir / "two.png"));
    const auto sidecar = nlohmann::json::parse(test::read_text(dir / "one.png.json"));
    EXPECT_EQ(sidecar["text_scale"], 7.5);
    EXPECT_EQ(sidecar["image_scale"], 1.5);
    EXPECT_EQ(sidecar["noise_mode"], "fixed");
    EXPECT_TRUE(sidecar["extra_text"].is_null());
}

TEST_F(CliTest, ApplyErrors) {
    ASSERT_EQ(invert("sepia.visii").code, 0);
    std::string extra;
    for (int i = 0; i < 70; ++i) {
        extra += "w ";
    }
    EXPECT_EQ(run("apply --instruction sepia.visii --image b1.png --out o.png --extra-text '" + extra + "'").code, 1);
    std::ofstream(dir / "broken.visii") << "VISII";
    const auto r = run("apply --instruction broken.visii --image b1.png --out o.png");
    EXPECT_EQ(r.code, 3);
    EXPECT_EQ(r.err.rfind("visii: error: truncated:", 0), 0u) << r.err;
    EXPECT_EQ(run("apply --instruction sepia.visii --image b1.png --out o.png --noise sometimes").code, 1);
}

TEST_F(CliTest, EvalEmptyManifest) {
    std::ofstream(dir / "m.json") << "[]";
    const auto r = run("eval --manifest m.json --out-dir out");
    EXPECT_EQ(r.code, 3);
    EXPECT_NE(r.err.find("no directions"), std::string::npos) << r.err;
}

TEST_F(CliTest, EvalWorkersAgreeWithASingleProcess) {
    using nlohmann::json;
    const auto pairs = [](std::initializer_list<std::pair<const char*, const char*>> list) {
        json out = json::array();
        for (const auto& [b, a] : list) {
            out.push_back(json::array({b, a}));
        }
        return out;
    };
    json manifest = json::array();
    manifest.push_back({{"direction_id", "sepia"},
                        {"examples", pairs({{"b0.png", "a0.png"}})},
                        {"tests", pairs({{"b1.png", "a1.png"}, {"b2.png", "a2.png"}})},
                        {"before_caption", "a photo"},
                        {"after_caption", "an old sepia photo"}});
    manifest.push_back({{"direction_id", "one"},
                        {"examples", pairs({{"b2.png", "a2.png"}})},
                        {"tests", pairs({{"b0.png", "a0.png"}})}});
    std::ofstream(dir / "m.json") << manifest.dump();
    ASSERT_EQ(run("eval --manifest m.json --out-dir single").code, 0);
    const auto r = run("eval --manifest m.json --out-dir multi --workers 2");
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = test::read_text(dir / "single/results.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 4);
    EXPECT_EQ(csv, test::read_text(dir / "multi/results.csv"));
    EXPECT_EQ(test::read_text(dir / "single/histogram.json"), test::read_text(dir / "multi/histogram.json"));
}

TEST_F(CliTest, HelpListsDefaults) {
    const auto r = run("invert --help");
    EXPECT_EQ(r.code, 0);
    for (const char* needle : {"--lmse", "4", "--lclip", "0.1", "--steps", "1000", "(default: off)"}) {
        EXPECT_NE(r.out.find(needle), std::string::npos) << needle;
    }
    EXPECT_EQ(run("").code, 1);
}

TEST_F(CliTest, DemoWritesScenePairs) {
    ASSERT_EQ(run("demo --out-dir scenes --count 2 --size 16 --edit warm").code, 0);
    EXPECT_EQ(load_png(dir / "scenes/scene1_warm.png").width, 16);
    EXPECT_TRUE(std::filesystem::exists(dir / "scenes/scene0.png"));
}

}  // namespace
}  // namespace visii
