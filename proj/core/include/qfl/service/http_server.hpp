#pragma once

#include <atomic>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "qfl/service/run_manager.hpp"

namespace httplib {
class Server;
}

namespace qfl::service {

struct BindAddress {
    std::string host = "127.0.0.1";
    int port = 5000;

    /// "ADDR:PORT", ":PORT" or "PORT". Port 0 picks a free port.
    [[nodiscard]] static BindAddress parse(const std::string& text);
    [[nodiscard]] std::string to_string() const;
};

/// JSON API plus the dashboard's static assets on top of a RunManager.
class HttpServer {
  public:
    struct Options {
        BindAddress bind;
        /// Dashboard build output; a placeholder page is served when absent.
        std::optional<std::filesystem::path> static_dir;
        /// Idle wait between heartbeats on an event stream.
        std::chrono::milliseconds event_poll{500};
    };

    HttpServer(RunManager& runs, Options options);
    ~HttpServer();

    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds the listening socket and returns the port. Throws Error when
    /// the address is unavailable.
    int bind();
    /// Serves until stop(). bind() must have succeeded.
    void listen();
    /// bind() followed by listen() on a background thread.
    int start();
    void stop();

    [[nodiscard]] int port() const noexcept { return port_; }

  private:
    void install_routes();

    RunManager& runs_;
    Options options_;
    std::unique_ptr<httplib::Server> server_;
    std::atomic<bool> stopping_{false};
    int port_ = 0;
    std::thread thread_;
};

}  // namespace qfl::service
