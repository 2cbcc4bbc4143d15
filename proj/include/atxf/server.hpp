#pragma once

// HTTP/JSON front end over ChatService.
//   GET  /health  -> {"status":"ok","models":N}
//   GET  /models  -> {"domains":[...]}
//   POST /chat    {"domain","session","message"} ->
//                 {"reply","wait_seconds","top_tokens":[{"token","id","probability"}],"session","history_length"}
// Errors: {"error":{"code","message"}} with code one of bad_request,
// unknown_domain, invalid_input, internal.

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "atxf/chat.hpp"
#include "atxf/checkpoint.hpp"

namespace atxf::server {

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    std::optional<std::filesystem::path> static_dir;  // served at / when set
};

// Model directory layout: vocab.txt plus one <domain>.ckpt per served domain.
// Files named <source>__<target>.ckpt are transfer runs and are not served.
// Throws StartupError when the directory has no vocabulary or no loadable checkpoint.
std::unique_ptr<chat::ChatService> load_model_dir(const std::filesystem::path& dir,
                                                  chat::ChatService::Options options = {});

class HttpServer {
public:
    HttpServer(chat::ChatService& service, ServerOptions options);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    // Binds the socket; StartupError when the port is busy. Returns the bound port.
    int bind();
    // Serves until stop(); bind() first.
    void run();
    // Blocks until run() is accepting connections.
    void wait_until_ready() const;
    void stop();
    int port() const noexcept { return port_; }

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    chat::ChatService& service_;
    ServerOptions options_;
    int port_ = -1;
};

}  // namespace atxf::server
