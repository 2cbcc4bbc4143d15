#include "atxf/server.hpp"

#include <algorithm>

#include "atxf/errors.hpp"
#include "httplib.h"
#include "json.hpp"

namespace atxf::server {

using nlohmann::json;

std::unique_ptr<chat::ChatService> load_model_dir(const std::filesystem::path& dir, chat::ChatService::Options options) {
    const auto vocab_path = dir / "vocab.txt";
    if (!std::filesystem::exists(vocab_path)) throw StartupError("no vocab.txt in model directory " + dir.string());
    auto service = std::make_unique<chat::ChatService>(Vocabulary::load(vocab_path), std::move(options));
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto& p = entry.path();
        if (p.extension() == ".ckpt" && p.stem().string().find("__") == std::string::npos) files.push_back(p);
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) service->add_model(load_checkpoint(f, service->vocabulary()));
    if (service->domains().empty()) throw StartupError("no domain checkpoints in " + dir.string());
    return service;
}

struct HttpServer::Impl {
    httplib::Server http;
};

namespace {

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    res.status = status;
    res.set_content(json{{"error", {{"code", code}, {"message", message}}}}.dump(), "application/json");
}

}  // namespace

HttpServer::HttpServer(chat::ChatService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>()), service_(service), options_(std::move(options)) {
    auto& http = impl_->http;
    // SO_REUSEADDR only: the library default also sets SO_REUSEPORT, which would
    // let a second server share a busy port silently.
    http.set_socket_options([](socket_t sock) {
        int yes = 1;
        setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    http.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
    http.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });

    http.Get("/health", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"status", "ok"}, {"models", service_.domains().size()}}.dump(), "application/json");
    });

    http.Get("/models", [this](const httplib::Request&, httplib::Response& res) {
        res.set_content(json{{"domains", service_.domains()}}.dump(), "application/json");
    });

    http.Post("/chat", [this](const httplib::Request& req, httplib::Response& res) {
        json body;
        try {
            body = json::parse(req.body);
        } catch (const json::exception&) {
            return send_error(res, 400, "bad_request", "request body is not valid JSON");
        }
        auto field = [&](const char* name) -> std::optional<std::string> {
            if (!body.is_object() || !body.contains(name) || !body[name].is_string()) return std::nullopt;
            return body[name].get<std::string>();
        };
        const auto domain = field("domain"), message = field("message");
        if (!domain || !message) return send_error(res, 400, "bad_request", "'domain' and 'message' must be strings");
        const std::string session = field("session").value_or("default");
        try {
            const auto r = service_.chat(*domain, session, *message);
            json top = json::array();
            for (const auto& t : r.top_tokens) top.push_back({{"token", t.token}, {"id", t.id}, {"probability", t.probability}});
            res.set_content(json{{"reply", r.reply},
                                 {"wait_seconds", r.wait_seconds},
                                 {"top_tokens", top},
                                 {"session", r.session},
                                 {"history_length", r.history_length}}
                                .dump(),
                            "application/json");
        } catch (const LookupError& e) {
            const bool unknown = !service_.has_domain(*domain);
            send_error(res, unknown ? 404 : 409, unknown ? "unknown_domain" : "session_conflict", e.what());
        } catch (const InputError& e) {
            send_error(res, 422, "invalid_input", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    });

    if (options_.static_dir && !http.set_mount_point("/", options_.static_dir->string()))
        throw StartupError("static directory " + options_.static_dir->string() + " does not exist");
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
    auto& http = impl_->http;
    if (options_.port == 0) {
        port_ = http.bind_to_any_port(options_.host);
    } else {
        port_ = http.bind_to_port(options_.host, options_.port) ? options_.port : -1;
    }
    if (port_ < 0)
        throw StartupError("cannot bind " + options_.host + ":" + std::to_string(options_.port) +
                           " (port busy or address unavailable)");
    return port_;
}

void HttpServer::run() {
    if (port_ < 0) throw StartupError("bind() must succeed before run()");
    impl_->http.listen_after_bind();
}

void HttpServer::wait_until_ready() const { impl_->http.wait_until_ready(); }

void HttpServer::stop() {
    if (impl_ && impl_->http.is_running()) impl_->http.stop();
}

}  // namespace atxf::server
