// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <fstream>
#include <thread>

#include <gtest/gtest.h>

#include "json.hpp"

#include "support.hpp"
#include "visii/demo_images.hpp"
#include "visii/image.hpp"
#include "visii/instruction_io.hpp"
#include "visii/service/server.hpp"

// After Eigen: <resolv.h> defines a `_res` macro that clashes with it.
#include "httplib.h"

namespace visii::service {
namespace {

using nlohmann::json;

std::string png(const Image& image) {
    const auto bytes = encode_png(image);
    return {bytes.begin(), bytes.end()};
}

class Running {
public:
    explicit Running(const std::filesystem::path& store, std::size_t max_image_bytes = std::size_t{16} << 20) {
        ServiceOptions options;
        options.store_dir = store;
        options.cors_origin = "http://console.local";
        options.max_image_bytes = max_image_bytes;
        m_service = std::make_unique<Service>(make_backend(BackendConfig::mini()), options);
        m_port = m_service->bind_to_any_port("127.0.0.1");
        m_thread = std::thread([this] { m_service->listen_after_bind(); });
        m_service->wait_until_ready();
        m_client = std::make_unique<httplib::Client>("127.0.0.1", m_port);
        m_client->set_read_timeout(60, 0);
    }
    ~Running() {
        m_service->stop();
        m_thread.join();
    }

    httplib::Client& client() { return *m_client; }
    Service& service() { return *m_service; }

    json get_json(const std::string& path, int expected = 200) {
        auto res = m_client->Get(path);
        EXPECT_TRUE(res);
        EXPECT_EQ(res->status, expected) << path << ": " << res->body;
        return json::parse(res->body);
    }

    json wait_done(const std::string& url) {
        for (int i = 0; i < 6000; ++i) {
            auto job = get_json(url);
            if (job["state"] == "done" || job["state"] == "failed") {
                return job;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(10));
        }
        ADD_FAILURE() << "job did not finish";
        return {};
    }

    httplib::Result submit_inversion(int pairs_before, int pairs_after, const std::string& config) {
        httplib::MultipartFormDataItems items;
        for (int i = 0; i < pairs_before; ++i) {
            items.push_back({"before", png(demo_scene(i)), "before.png", "image/png"});
        }
        for (int i = 0; i < pairs_after; ++i) {
            items.push_back({"after", png(apply_pixel_edit(demo_scene(i), PixelEdit::sepia)), "after.png", "image/png"});
        }
        items.push_back({"config", config, "", "application/json"});
        return m_client->Post("/inversions", items);
    }

    httplib::Result submit_apply(const std::string& instruction_id, const std::string& extra_text,
                                 const std::string& guidance = "{\"sampler_steps\": 10}") {
        httplib::MultipartFormDataItems items = {
            {"instruction_id", instruction_id, "", ""},
            {"image", png(demo_scene(20, 80)), "test.png", "image/png"},
            {"extra_text", extra_text, "", ""},
            {"guidance", guidance, "", "application/json"},
        };
        return m_client->Post("/apply", items);
    }

    std::string invert_and_wait(const std::string& config = R"({"n_steps": 20})") {
        auto res = submit_inversion(1, 1, config);
        EXPECT_EQ(res->status, 202) << res->body;
        const auto job = wait_done("/inversions/" + json::parse(res->body)["job_id"].get<std::string>());
        EXPECT_EQ(job["state"], "done") << job.dump();
        return job["instruction_id"];
    }

    std::string apply_and_fetch(const std::string& instruction_id, const std::string& extra_text) {
        auto res = submit_apply(instruction_id, extra_text);
        EXPECT_EQ(res->status, 202) << res->body;
        const auto id = json::parse(res->body)["job_id"].get<std::string>();
        const auto job = wait_done("/jobs/" + id);
        EXPECT_EQ(job["state"], "done") << job.dump();
        auto image = m_client->Get(job["image_url"].get<std::string>());
        EXPECT_EQ(image->status, 200);
        EXPECT_EQ(image->get_header_value("Content-Type"), "image/png");
        return image->body;
    }

private:
    std::unique_ptr<Service> m_service;
    int m_port = 0;
    std::thread m_thread;
    std::unique_ptr<httplib::Client> m_client;
};

TEST(Service, FreshStoreListsNothing) {
    test::TempDir dir;
    Running server(dir.path());
    EXPECT_EQ(server.get_json("/instructions")["instructions"], json::array());
    EXPECT_EQ(server.get_json("/health")["status"], "ok");
}

TEST(Service, InversionWithEmptyConfigUsesDefaults) {
    test::TempDir dir;
    Running server(dir.path());
    auto res = server.submit_inversion(1, 1, "");
    ASSERT_EQ(res->status, 202) << res->body;
    const auto id = json::parse(res->body)["job_id"].get<std::string>();
    const auto job = server.get_json("/inversions/" + id);
    EXPECT_EQ(job["config"]["lambda_mse"], 4.0);
    EXPECT_EQ(job["config"]["lambda_clip"], 0.1);
    EXPECT_EQ(job["config"]["n_steps"], 1000);
    EXPECT_EQ(job["kind"], "invert");
    const auto done = server.wait_done("/inversions/" + id);
    EXPECT_EQ(done["progress"]["done"], 1000);
    EXPECT_EQ(done["loss_tail"].size(), 50u);
    EXPECT_EQ(done["loss_tail"].back()["step"], 999);
}

TEST(Service, ValidationErrors) {
    test::TempDir dir;
    Running server(dir.path());
    EXPECT_EQ(server.submit_inversion(2, 1, "")->status, 400);
    EXPECT_EQ(server.submit_inversion(0, 0, "")->status, 400);
    EXPECT_EQ(server.submit_inversion(1, 1, R"({"lambda_msee": 3})")->status, 400);
    EXPECT_EQ(server.submit_inversion(1, 1, R"({"n_timesteps": 5000})")->status, 400);
    EXPECT_EQ(server.submit_inversion(1, 1, "not json")->status, 400);
    httplib::MultipartFormDataItems garbage = {{"before", "not a png", "x.png", "image/png"},
                                               {"after", "not a png", "y.png", "image/png"}};
    EXPECT_EQ(server.client().Post("/inversions", garbage)->status, 400);
    EXPECT_EQ(server.client().Post("/inversions", "{}", "application/json")->status, 400);
}

TEST(Service, OversizeUploadIs413) {
    test::TempDir dir;
    Running server(dir.path(), 1024);
    auto res = server.submit_inversion(1, 1, "");
    EXPECT_EQ(res->status, 413) << res->body;
}

TEST(Service, UnknownIdsAre404) {
    test::TempDir dir;
    Running server(dir.path());
    auto& client = server.client();
    EXPECT_EQ(client.Get("/inversions/00000000-0000-0000-0000-000000000000")->status, 404);
    EXPECT_EQ(client.Get("/jobs/nope")->status, 404);
    EXPECT_EQ(client.Get("/instructions/00000000-0000-0000-0000-000000000000")->status, 404);
    EXPECT_EQ(client.Get("/instructions/00000000-0000-0000-0000-000000000000/file")->status, 404);
    EXPECT_EQ(client.Get("/instructions/abc/file")->status, 404);
    EXPECT_EQ(server.submit_apply("00000000-0000-0000-0000-000000000000", "")->status, 404);
}

TEST(Service, DoneInversionResolvesAndIsListed) {
    test::TempDir dir;
    Running server(dir.path());
    const auto id = server.invert_and_wait();
    const auto meta = server.get_json("/instructions/" + id);
    EXPECT_EQ(meta["model_id"], "visii-mini-v1");
    const auto list = server.get_json("/instructions")["instructions"];
    ASSERT_EQ(list.size(), 1u);
    EXPECT_EQ(list[0]["id"], id);

    auto file = server.client().Get("/instructions/" + id + "/file");
    ASSERT_EQ(file->status, 200);
    const std::vector<std::uint8_t> bytes(file->body.begin(), file->body.end());
    EXPECT_EQ(list[0]["k"], deserialize_instruction(bytes).k());
    EXPECT_TRUE(std::filesystem::exists(dir / ("instructions/" + id + ".loss.csv")));
}

TEST(Service, ProgressIsMonotoneWhileRunning) {
    test::TempDir dir;
    Running server(dir.path());
    auto res = server.submit_inversion(1, 1, R"({"n_steps": 4000})");
    ASSERT_EQ(res->status, 202);
    const auto url = "/inversions/" + json::parse(res->body)["job_id"].get<std::string>();
    std::vector<int> seen;
    for (;;) {
        const auto job = server.get_json(url);
        seen.push_back(job["progress"]["done"]);
        if (job["state"] == "done") {
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    EXPECT_TRUE(std::is_sorted(seen.begin(), seen.end()));
    EXPECT_EQ(seen.back(), 4000);
}

TEST(Service, QueueIsFifoAndImagesWaitForCompletion) {
    test::TempDir dir;
    Running server(dir.path());
    const auto id = server.invert_and_wait();
    auto slow = server.submit_inversion(1, 1, R"({"n_steps": 3000})");
    auto apply = server.submit_apply(id, "");
    ASSERT_EQ(apply->status, 202);
    const auto apply_id = json::parse(apply->body)["job_id"].get<std::string>();
    const auto first = server.get_json("/jobs/" + apply_id);
    if (first["state"] != "done") {
        EXPECT_EQ(server.client().Get("/jobs/" + apply_id + "/image")->status, 409);
    }
    server.wait_done("/jobs/" + apply_id);
    const auto slow_job = server.get_json("/inversions/" + json::parse(slow->body)["job_id"].get<std::string>());
    EXPECT_EQ(slow_job["state"], "done");
}

TEST(Service, ApplyIsDeterministicAndHonoursExtraText) {
    test::TempDir dir;
    Running server(dir.path());
    const auto id = server.invert_and_wait();
    const auto a = server.apply_and_fetch(id, "");
    const auto b = server.apply_and_fetch(id, "");
    EXPECT_EQ(a, b);
    const auto c = server.apply_and_fetch(id, "make it blue");
    EXPECT_NE(a, c);

    const std::vector<std::uint8_t> bytes(a.begin(), a.end());
    EXPECT_EQ(decode_png(bytes).width, 64);

    std::string extra;
    for (int i = 0; i < 70; ++i) {
        extra += "w ";
    }
    EXPECT_EQ(server.submit_apply(id, extra)->status, 400);

    int sidecars = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir / "results")) {
        if (entry.path().extension() == ".json") {
            const auto sidecar = json::parse(test::read_text(entry.path()));
            EXPECT_EQ(sidecar["text_scale"], 7.5);
            EXPECT_EQ(sidecar["image_scale"], 1.5);
            ++sidecars;
        }
    }
    EXPECT_EQ(sidecars, 3);
}

TEST(Service, RestartRebuildsListFromStore) {
    test::TempDir dir;
    std::string id;
    {
        Running server(dir.path());
        id = server.invert_and_wait();
    }
    // A damaged file is skipped rather than hiding the rest.
    std::ofstream(dir / "instructions/11111111-1111-1111-1111-111111111111.visii") << "junk";
    Running restarted(dir.path());
    const auto list = restarted.get_json("/instructions")["instructions"];
    ASSERT_EQ(list.size(), 1u);
    EXPECT_EQ(list[0]["id"], id);
}

TEST(Service, CorsHeaders) {
    test::TempDir dir;
    Running server(dir.path());
    auto res = server.client().Get("/instructions");
    EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "http://console.local");
    auto pre = server.client().Options("/apply");
    EXPECT_EQ(pre->status, 204);
    EXPECT_NE(pre->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
}

TEST(JobQueue, FailedJobsCarryTheError) {
    JobQueue queue;
    const auto id = queue.submit(JobKind::apply, 1, json::object(), [](JobContext&) { throw std::runtime_error("boom"); });
    queue.wait_idle();
    const auto job = queue.get(id);
    ASSERT_TRUE(job);
    EXPECT_EQ(job->state, JobState::failed);
    EXPECT_EQ(job->error, "boom");
}

TEST(JobQueue, LossTailKeepsTheLastFifty) {
    JobQueue queue;
    const auto id = queue.submit(JobKind::invert, 120, json::object(), [](JobContext& ctx) {
        for (int i = 0; i < 120; ++i) {
            LossBreakdown loss;
            loss.step = i;
            ctx.push_loss(loss);
            ctx.set_progress(i + 1);
            ctx.set_progress(0);  // never moves backwards
        }
    });
    queue.wait_idle();
    const auto job = queue.get(id);
    EXPECT_EQ(job->loss_tail.size(), 50u);
    EXPECT_EQ(job->loss_tail.front().step, 70);
    EXPECT_EQ(job->progress, 120);
}

TEST(Store, ValidIds) {
    EXPECT_TRUE(Store::valid_id("123e4567-e89b-42d3-a456-426614174000"));
    EXPECT_FALSE(Store::valid_id("123E4567-e89b-42d3-a456-426614174000"));
    EXPECT_FALSE(Store::valid_id("../123e4567-e89b-42d3-a456-42661417400"));
    EXPECT_FALSE(Store::valid_id(""));
}

}  // namespace
}  // namespace visii::service
