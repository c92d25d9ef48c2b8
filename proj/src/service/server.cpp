// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#include "visii/service/server.hpp"

#include <fstream>
#include <iterator>
#include <optional>

#include "httplib.h"

#include "visii/editor.hpp"
#include "visii/errors.hpp"
#include "visii/image.hpp"
#include "visii/instruction_io.hpp"
#include "visii/inversion.hpp"
#include "visii/tokenizer.hpp"

namespace visii::service {

namespace {

constexpr const char* kJson = "application/json";

struct HttpError {
    int status;
    std::string message;
};

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

int status_for(ErrorCode code) {
    switch (code) {
    case ErrorCode::io:
    case ErrorCode::backend:
    case ErrorCode::numerical:
    case ErrorCode::captioner_unavailable:
        return 500;
    default:
        return 400;
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    VISII_CHECK(in.good(), ErrorCode::io, "cannot open ", path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::optional<std::string> form_text(const httplib::Request& req, const std::string& key) {
    if (req.has_file(key)) {
        return req.get_file_value(key).content;
    }
    if (req.has_param(key)) {
        return req.get_param_value(key);
    }
    return std::nullopt;
}

nlohmann::json parse_json_field(const std::optional<std::string>& text, const char* what) {
    if (!text || text->empty()) {
        return nlohmann::json::object();
    }
    try {
        auto json = nlohmann::json::parse(*text);
        if (!json.is_object()) {
            throw HttpError{400, std::string(what) + " must be a JSON object"};
        }
        return json;
    } catch (const nlohmann::json::exception& e) {
        throw HttpError{400, std::string("invalid ") + what + ": " + e.what()};
    }
}

class Handlers {
public:
    Handlers(const ServiceOptions& options, const Backend& backend, Store& store, JobQueue& jobs)
        : m_options(options), m_backend(backend), m_store(store), m_jobs(jobs) {}

    void post_inversion(const httplib::Request& req, httplib::Response& res) {
        require_multipart(req);
        const auto befores = req.get_file_values("before");
        const auto afters = req.get_file_values("after");
        if (befores.empty()) {
            throw HttpError{400, "at least one before/after pair is required"};
        }
        if (befores.size() != afters.size()) {
            throw HttpError{400, "got " + std::to_string(befores.size()) + " before images and " +
                                     std::to_string(afters.size()) + " after images"};
        }
        std::vector<TrainingPair> pairs;
        for (std::size_t i = 0; i < befores.size(); ++i) {
            pairs.push_back({upload_image(befores[i]), upload_image(afters[i])});
        }
        auto config = InversionConfig::from_json(parse_json_field(form_text(req, "config"), "config"));
        config.validate(&m_backend);

        const auto id = m_jobs.submit(JobKind::invert, config.n_steps, config.to_json(),
                                      [this, pairs = std::move(pairs), config](JobContext& ctx) {
                                          InversionHooks hooks;
                                          hooks.on_step = [&ctx](const LossBreakdown& loss) {
                                              ctx.push_loss(loss);
                                              ctx.set_progress(loss.step + 1);
                                          };
                                          auto result = invert(m_backend, pairs, config, hooks);
                                          const auto stored = m_store.put_instruction(result.instruction,
                                                                                      result.history);
                                          ctx.set_result(stored, m_store.instruction_path(stored)->string());
                                      });
        send_json(res, 202, {{"job_id", id}, {"url", "/inversions/" + id}});
    }

    void post_apply(const httplib::Request& req, httplib::Response& res) {
        require_multipart(req);
        const auto instruction_id = form_text(req, "instruction_id").value_or("");
        if (!m_store.instruction_path(instruction_id)) {
            throw HttpError{404, "unknown instruction '" + instruction_id + "'"};
        }
        if (!req.has_file("image")) {
            throw HttpError{400, "missing image"};
        }
        auto image = upload_image(req.get_file_value("image"));
        auto extra = form_text(req, "extra_text");
        if (extra && extra->empty()) {
            extra.reset();
        }
        auto guidance = GuidanceConfig::from_json(parse_json_field(form_text(req, "guidance"), "guidance"));
        guidance.validate(m_backend.timesteps());

        const auto instruction = m_store.load_instruction(instruction_id);
        if (extra) {
            const auto extra_tokens = static_cast<int>(m_backend.tokenize_content(*extra).size());
            if (instruction.k() + extra_tokens > kMaxContentTokens) {
                throw HttpError{400, "instruction (" + std::to_string(instruction.k()) + " tokens) plus extra text (" +
                                         std::to_string(extra_tokens) + " tokens) exceeds " +
                                         std::to_string(kMaxContentTokens) + " tokens"};
            }
        }

        auto config_json = guidance.to_json();
        config_json["instruction_id"] = instruction_id;
        config_json["extra_text"] = extra ? nlohmann::json(*extra) : nlohmann::json(nullptr);
        const auto id = m_jobs.submit(
            JobKind::apply, guidance.sampler_steps, config_json,
            [this, instruction, instruction_id, image = std::move(image), extra, guidance](JobContext& ctx) {
                const auto result = apply(m_backend, instruction, image, guidance,
                                          extra ? std::optional<std::string_view>(*extra) : std::nullopt);
                const auto path = m_store.result_path(ctx.id());
                save_png(result.image, path);
                auto sidecar = edit_sidecar(instruction_id + ".visii", extra ? std::optional<std::string_view>(*extra)
                                                                              : std::nullopt,
                                            guidance, instruction.metadata().base_seed);
                std::ofstream(sidecar_path(path)) << sidecar.dump(2) << "\n";
                ctx.set_result(instruction_id, path.string());
            });
        send_json(res, 202, {{"job_id", id}, {"url", "/jobs/" + id}});
    }

    void get_job(const std::string& id, httplib::Response& res, std::optional<JobKind> kind) {
        const auto job = m_jobs.get(id);
        if (!job || (kind && job->kind != *kind)) {
            throw HttpError{404, "unknown job '" + id + "'"};
        }
        send_json(res, 200, job->to_json());
    }

    void get_job_image(const std::string& id, httplib::Response& res) {
        const auto job = m_jobs.get(id);
        if (!job || job->kind != JobKind::apply) {
            throw HttpError{404, "unknown apply job '" + id + "'"};
        }
        if (job->state != JobState::done) {
            throw HttpError{409, "job is " + std::string(to_string(job->state))};
        }
        res.status = 200;
        res.set_content(read_file(job->result_path), "image/png");
    }

    void list_instructions(httplib::Response& res) {
        auto items = nlohmann::json::array();
        for (const auto& item : m_store.list_instructions()) {
            items.push_back(item.to_json());
        }
        send_json(res, 200, {{"instructions", items}});
    }

    void get_instruction(const std::string& id, httplib::Response& res) {
        const auto instruction = load_known(id);
        StoredInstruction item{id, instruction.k(), instruction.width(), instruction.metadata()};
        auto body = item.to_json();
        body["file_url"] = "/instructions/" + id + "/file";
        send_json(res, 200, body);
    }

    void get_instruction_file(const std::string& id, httplib::Response& res) {
        const auto path = m_store.instruction_path(id);
        if (!path) {
            throw HttpError{404, "unknown instruction '" + id + "'"};
        }
        res.status = 200;
        res.set_header("Content-Disposition", "attachment; filename=\"" + id + ".visii\"");
        res.set_content(read_file(*path), "application/octet-stream");
    }

    void health(httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}, {"model_id", m_backend.config().model_id}});
    }

    void defaults(httplib::Response& res) {
        send_json(res, 200,
                  {{"model_id", m_backend.config().model_id},
                   {"native_resolution", m_backend.config().native_resolution},
                   {"max_image_bytes", m_options.max_image_bytes},
                   {"inversion", InversionConfig{}.to_json()},
                   {"guidance", GuidanceConfig{}.to_json()}});
    }

private:
    static void require_multipart(const httplib::Request& req) {
        if (!req.is_multipart_form_data()) {
            throw HttpError{400, "expected multipart/form-data"};
        }
    }

    Image upload_image(const httplib::MultipartFormData& part) const {
        if (part.content.size() > m_options.max_image_bytes) {
            throw HttpError{413, "image '" + part.filename + "' exceeds " + std::to_string(m_options.max_image_bytes) +
                                     " bytes"};
        }
        const auto* data = reinterpret_cast<const std::uint8_t*>(part.content.data());
        Image decoded;
        try {
            decoded = decode_png({data, part.content.size()});
        } catch (const Error& e) {
            throw HttpError{400, "image '" + part.filename + "' is not a readable PNG: " + e.what()};
        }
        const int side = m_backend.config().native_resolution;
        return center_crop_resize(decoded, side, side);
    }

    InstructionEmbedding load_known(const std::string& id) const {
        if (!m_store.instruction_path(id)) {
            throw HttpError{404, "unknown instruction '" + id + "'"};
        }
        return m_store.load_instruction(id);
    }

    const ServiceOptions& m_options;
    const Backend& m_backend;
    Store& m_store;
    JobQueue& m_jobs;
};

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const HttpError& e) {
            send_error(res, e.status, e.message);
        } catch (const Error& e) {
            send_error(res, status_for(e.code()), e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, e.what());
        }
    };
}

}  // namespace

Service::Service(std::unique_ptr<Backend> backend, ServiceOptions options)
    : m_options(std::move(options)),
      m_backend(std::move(backend)),
      m_store(m_options.store_dir),
      m_http(std::make_unique<httplib::Server>()) {
    VISII_CHECK(m_backend != nullptr, ErrorCode::invalid_argument, "service needs a backend");
    install_routes();
}

Service::~Service() {
    stop();
    m_jobs.shutdown();
}

void Service::install_routes() {
    auto handlers = std::make_shared<Handlers>(m_options, *m_backend, m_store, m_jobs);
    auto& http = *m_http;

    // Room for a batch of full-size images; per-image limits are checked separately.
    http.set_payload_max_length(m_options.max_image_bytes * 64);
    http.set_default_headers({{"Access-Control-Allow-Origin", m_options.cors_origin},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                              {"Access-Control-Allow-Headers", "Content-Type"}});
    http.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    const std::string id = "([0-9a-fA-F-]+)";
    http.Post("/inversions", guarded([handlers](const auto& req, auto& res) { handlers->post_inversion(req, res); }));
    http.Get("/inversions/" + id, guarded([handlers](const auto& req, auto& res) {
                 handlers->get_job(req.matches[1], res, JobKind::invert);
             }));
    http.Post("/apply", guarded([handlers](const auto& req, auto& res) { handlers->post_apply(req, res); }));
    http.Get("/jobs/" + id, guarded([handlers](const auto& req, auto& res) {
                 handlers->get_job(req.matches[1], res, std::nullopt);
             }));
    http.Get("/jobs/" + id + "/image",
             guarded([handlers](const auto& req, auto& res) { handlers->get_job_image(req.matches[1], res); }));
    http.Get("/instructions", guarded([handlers](const auto&, auto& res) { handlers->list_instructions(res); }));
    http.Get("/instructions/" + id,
             guarded([handlers](const auto& req, auto& res) { handlers->get_instruction(req.matches[1], res); }));
    http.Get("/instructions/" + id + "/file", guarded([handlers](const auto& req, auto& res) {
                 handlers->get_instruction_file(req.matches[1], res);
             }));
    http.Get("/health", guarded([handlers](const auto&, auto& res) { handlers->health(res); }));
    http.Get("/defaults", guarded([handlers](const auto&, auto& res) { handlers->defaults(res); }));
}

int Service::bind_to_any_port(const std::string& host) { return m_http->bind_to_any_port(host); }

bool Service::bind(const std::string& host, int port) { return m_http->bind_to_port(host, port); }

bool Service::listen_after_bind() { return m_http->listen_after_bind(); }

void Service::stop() {
    if (m_http && m_http->is_running()) {
        m_http->stop();
    }
}

void Service::wait_until_ready() const { m_http->wait_until_ready(); }

}  // namespace visii::service
