// Copyright (C) 2026 The visii Authors
// SPDX-License-Identifier: Apache-2.0

// visii_server: REST service for the web console.

#include <csignal>
#include <iostream>

#include "CLI11.hpp"

#include "visii/backend.hpp"
#include "visii/errors.hpp"
#include "visii/service/server.hpp"

namespace {
visii::service::Service* g_service = nullptr;

void on_signal(int) {
    if (g_service != nullptr) {
        g_service->stop();
    }
}
}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"visii_server: inversion and editing jobs over HTTP"};
    app.option_defaults()->always_capture_default();
    visii::service::ServiceOptions options;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string backend_config;
    app.add_option("--host", host, "bind address");
    app.add_option("--port", port, "port (0 picks a free one)");
    app.add_option("--store", options.store_dir, "store directory");
    app.add_option("--cors-origin", options.cors_origin, "Access-Control-Allow-Origin value");
    app.add_option("--max-image-bytes", options.max_image_bytes, "per-image upload cap");
    app.add_option("--backend-config", backend_config, "backend config JSON (default: $VISII_BACKEND_CONFIG)");
    CLI11_PARSE(app, argc, argv);

    try {
        auto backend = backend_config.empty() ? visii::load_backend_from_env()
                                              : visii::make_backend(visii::BackendConfig::load(backend_config));
        visii::service::Service service(std::move(backend), options);
        const bool bound = port == 0 ? (port = service.bind_to_any_port(host)) > 0 : service.bind(host, port);
        if (!bound) {
            std::cerr << "visii_server: error: io: cannot bind " << host << ":" << port << std::endl;
            return 2;
        }
        g_service = &service;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::cout << "listening on http://" << host << ":" << port << " store=" << options.store_dir.string()
                  << std::endl;
        service.listen_after_bind();
        g_service = nullptr;
    } catch (const visii::Error& e) {
        std::cerr << "visii_server: error: " << visii::to_string(e.code()) << ": " << e.what() << std::endl;
        return 2;
    }
    return 0;
}
