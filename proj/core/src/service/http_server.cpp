#include "qfl/service/http_server.hpp"

#include <sys/socket.h>

#include <charconv>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

namespace qfl::service {

using nlohmann::json;

BindAddress BindAddress::parse(const std::string& text) {
    BindAddress out;
    std::string port_text = text;
    if (const auto colon = text.rfind(':'); colon != std::string::npos) {
        if (colon > 0) {
            out.host = text.substr(0, colon);
        }
        port_text = text.substr(colon + 1);
    }
    int port = -1;
    const auto* end = port_text.data() + port_text.size();
    const auto [ptr, ec] = std::from_chars(port_text.data(), end, port);
    if (ec != std::errc{} || ptr != end || port < 0 || port > 65535) {
        throw ConfigError("invalid bind address '" + text + "', expected ADDR:PORT");
    }
    out.port = port;
    return out;
}

std::string BindAddress::to_string() const { return fmt::format("{}:{}", host, port); }

namespace {

constexpr const char* kJson = "application/json";

constexpr const char* kPlaceholderPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>qflsim</title></head>
<body><h1>qflsim</h1>
<p>The dashboard is not installed. The API is available under <code>/api</code>.</p>
</body></html>
)";

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, {{"error", message}});
}

// Maps library errors onto status codes.
template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
        try {
            handler(req, res);
        } catch (const ValidationError& e) {
            send_json(res, 422, e.to_json());
        } catch (const ParseError& e) {
            json body = {{"error", e.what()}, {"line", e.line()}};
            body["column"] = e.column() ? json(*e.column()) : json(nullptr);
            send_json(res, 422, body);
        } catch (const NotFoundError& e) {
            send_error(res, 404, e.what());
        } catch (const ConflictError& e) {
            send_error(res, 409, e.what());
        } catch (const QueueFullError& e) {
            send_error(res, 429, e.what());
        } catch (const ConfigError& e) {
            send_error(res, 422, e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, std::string("invalid JSON: ") + e.what());
        } catch (const std::exception& e) {
            spdlog::error("{} {}: {}", req.method, req.path, e.what());
            send_error(res, 500, e.what());
        }
    };
}

std::optional<int> int_param(const std::string& text) {
    int value = 0;
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        return std::nullopt;
    }
    return value;
}

std::string sse(std::string_view event, const json& data, std::optional<int> id = std::nullopt) {
    std::string out = fmt::format("event: {}\n", event);
    if (id) {
        out += fmt::format("id: {}\n", *id);
    }
    out += fmt::format("data: {}\n\n", data.dump());
    return out;
}

}  // namespace

HttpServer::HttpServer(RunManager& runs, Options options)
    : runs_(runs), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    // The stock options also set SO_REUSEPORT, which lets a second server
    // share a busy port.
    server_->set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
    });
    server_->set_payload_max_length(kMaxUploadBytes);
    install_routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
    const auto& addr = options_.bind;
    if (addr.port == 0) {
        port_ = server_->bind_to_any_port(addr.host);
        if (port_ < 0) {
            throw Error("cannot bind " + addr.to_string());
        }
    } else {
        if (!server_->bind_to_port(addr.host, addr.port)) {
            throw Error("cannot bind " + addr.to_string() + ": address unavailable");
        }
        port_ = addr.port;
    }
    return port_;
}

void HttpServer::listen() {
    spdlog::info("listening on http://{}:{}", options_.bind.host, port_);
    server_->listen_after_bind();
}

int HttpServer::start() {
    const int port = bind();
    thread_ = std::thread([this] { listen(); });
    server_->wait_until_ready();
    return port;
}

void HttpServer::stop() {
    stopping_ = true;
    if (server_) {
        server_->stop();
    }
    if (thread_.joinable()) {
        thread_.join();
    }
}

void HttpServer::install_routes() {
    auto& svr = *server_;

    svr.Get("/api/health", guarded([](const httplib::Request&, httplib::Response& res) {
                send_json(res, 200, {{"status", "ok"}});
            }));

    svr.Get("/api/simulations", guarded([this](const httplib::Request&, httplib::Response& res) {
                json out = json::array();
                for (const auto& h : runs_.list()) {
                    out.push_back(h.to_json());
                }
                send_json(res, 200, out);
            }));

    svr.Post("/api/simulations", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 const json body = json::parse(req.body);
                 send_json(res, 201, runs_.create(body).to_json());
             }));

    svr.Get(R"(/api/simulations/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                send_json(res, 200, runs_.get(req.matches[1]).to_json());
            }));

    svr.Post(R"(/api/simulations/([^/]+)/cancel)",
             guarded([this](const httplib::Request& req, httplib::Response& res) {
                 send_json(res, 202, runs_.cancel(req.matches[1]).to_json());
             }));

    svr.Get(R"(/api/simulations/([^/]+)/events)",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                (void)runs_.get(id);
                int from = 0;
                std::string from_text;
                if (req.has_param("from")) {
                    from_text = req.get_param_value("from");
                } else if (req.has_header("Last-Event-ID")) {
                    from_text = req.get_header_value("Last-Event-ID");
                }
                if (!from_text.empty()) {
                    const auto parsed = int_param(from_text);
                    if (!parsed || *parsed < 0) {
                        send_error(res, 400, "from must be a non-negative round index");
                        return;
                    }
                    from = *parsed;
                }
                res.set_header("Cache-Control", "no-cache");
                auto next = std::make_shared<int>(from);
                res.set_chunked_content_provider(
                    "text/event-stream", [this, id, next](std::size_t, httplib::DataSink& sink) {
                        if (stopping_) {
                            sink.done();
                            return true;
                        }
                        const auto batch = runs_.wait_events(id, *next, options_.event_poll);
                        std::string chunk;
                        for (const auto& event : batch.rounds) {
                            const int round = event.at("round").get<int>();
                            chunk += sse("round", event, round);
                            *next = round;
                        }
                        if (batch.terminal) {
                            chunk += sse("status", *batch.terminal);
                        } else if (chunk.empty()) {
                            chunk = ": keepalive\n\n";
                        }
                        if (!sink.write(chunk.data(), chunk.size())) {
                            return false;
                        }
                        if (batch.terminal) {
                            sink.done();
                        }
                        return true;
                    });
            }));

    svr.Get(R"(/api/simulations/([^/]+)/export)",
            guarded([this](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                const auto entries = runs_.export_bundle(id).entries();
                res.status = 200;
                res.set_header("Content-Disposition", fmt::format("attachment; filename=\"{}.tar\"", id));
                res.set_content(make_tar(entries), "application/x-tar");
            }));

    svr.Post("/api/datasets", guarded([this](const httplib::Request& req, httplib::Response& res) {
                 if (!req.is_multipart_form_data() || !req.has_file("file")) {
                     send_json(res, 422, ValidationError("file", "multipart field 'file' is required").to_json());
                     return;
                 }
                 const auto file = req.get_file_value("file");
                 std::optional<LabelColumn> column;
                 if (req.has_file("label_column")) {
                     const std::string text = req.get_file_value("label_column").content;
                     if (const auto index = int_param(text); index && *index >= 0) {
                         column = LabelColumn{static_cast<std::size_t>(*index)};
                     } else if (!text.empty()) {
                         column = LabelColumn{text};
                     }
                 }
                 const std::string name = file.filename.empty() ? "upload.csv" : file.filename;
                 send_json(res, 201, runs_.upload_dataset(file.content, name, column).to_json());
             }));

    bool mounted = false;
    if (options_.static_dir && std::filesystem::is_directory(*options_.static_dir)) {
        mounted = svr.set_mount_point("/", options_.static_dir->string());
    }
    if (!mounted) {
        svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(kPlaceholderPage, "text/html");
        });
    }
}

}  // namespace qfl::service
