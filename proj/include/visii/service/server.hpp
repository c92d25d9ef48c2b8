// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>

#include "visii/backend.hpp"
#include "visii/service/job_queue.hpp"
#include "visii/service/store.hpp"

namespace httplib {
class Server;
}

namespace visii::service {

struct ServiceOptions {
    std::filesystem::path store_dir = "visii-store";
    std::string cors_origin = "*";
    std::size_t max_image_bytes = std::size_t{16} << 20;
};

/// REST front end over one backend, a job queue and an on-disk store.
///
///   POST /inversions            multipart before[], after[], config (JSON)
///   GET  /inversions/{id}       job status with loss tail
///   POST /apply                 multipart instruction_id, image, extra_text, guidance
///   GET  /jobs/{id}             any job
///   GET  /jobs/{id}/image       edited PNG, 409 until the job is done
///   GET  /instructions          stored instructions
///   GET  /instructions/{id}     metadata
///   GET  /instructions/{id}/file  the .visii bytes
///   GET  /health, GET /defaults
class Service {
public:
    Service(std::unique_ptr<Backend> backend, ServiceOptions options);
    ~Service();

    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    /// Binds to an ephemeral port and returns it, or -1.
    int bind_to_any_port(const std::string& host);
    bool bind(const std::string& host, int port);
    /// Blocks serving requests until stop().
    bool listen_after_bind();
    void stop();
    void wait_until_ready() const;

    const Backend& backend() const { return *m_backend; }
    Store& store() { return m_store; }
    JobQueue& jobs() { return m_jobs; }

private:
    void install_routes();

    ServiceOptions m_options;
    std::unique_ptr<Backend> m_backend;
    Store m_store;
    std::unique_ptr<httplib::Server> m_http;
    // Declared last so the worker is joined before anything it uses goes away.
    JobQueue m_jobs;
};

}  // namespace visii::service
