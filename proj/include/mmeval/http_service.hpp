#pragma once

#include <memory>
#include <string>

#include "mmeval/eval_server.hpp"

namespace mmeval {

// HTTP front end for an EvalServer. All bodies are canonical JSON except
// media and artifact transfers, which are raw bytes.
class HttpService {
public:
    explicit HttpService(EvalServer& server, int worker_threads = 16);
    ~HttpService();

    HttpService(const HttpService&) = delete;
    HttpService& operator=(const HttpService&) = delete;

    // Port 0 picks a free port. Returns the bound port; throws when the
    // address cannot be bound.
    int bind(const std::string& host, int port);
    // Serves until stop(); requires a prior bind().
    void listen();
    // bind() + listen() on a background thread; returns once accepting.
    int start(const std::string& host, int port);
    void stop();

    int port() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// "host:port" or ":port" or "port"; host defaults to 127.0.0.1.
std::pair<std::string, int> parse_bind_address(const std::string& text);

}  // namespace mmeval
