#include "mmeval/backend.hpp"

#include <httplib.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "mmeval/csv.hpp"
#include "mmeval/hashing.hpp"
#include "mmeval/server_client.hpp"

namespace fs = std::filesystem;

namespace mmeval {

namespace {

constexpr std::array<std::pair<BackendKind, std::string_view>, 4> kKinds{{
    {BackendKind::openai_chat, "openai_chat"},
    {BackendKind::external_command, "external_command"},
    {BackendKind::mock_echo, "mock_echo"},
    {BackendKind::mock_scripted, "mock_scripted"},
}};

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void simulate_latency(double ms) {
    if (ms > 0) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(ms));
}

// Thrown by a single attempt when another attempt may succeed.
struct Transient : std::runtime_error {
    Transient(const std::string& m, int s) : std::runtime_error(m), status(s) {}
    int status;
};

template <typename Attempt>
BackendResponse with_retry(const RetryPolicy& retry, Attempt attempt) {
    const auto start = Clock::now();
    for (int k = 1;; ++k) {
        try {
            BackendResponse r = attempt(k);
            r.attempts = k;
            r.latency_ms = elapsed_ms(start);
            return r;
        } catch (const Transient& e) {
            if (k >= retry.max_attempts) {
                throw BackendFailure(std::string(e.what()) + " (gave up after " + std::to_string(k) + " attempts)", k,
                                     e.status);
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(retry.backoff_ms(k)));
        }
    }
}

class MockEcho : public Backend {
public:
    explicit MockEcho(AdapterSpec spec) : spec_(std::move(spec)) {}

    BackendResponse call(const BackendRequest& request) override {
        const auto start = Clock::now();
        simulate_latency(spec_.latency_ms);
        BackendResponse r;
        const std::string echo = echo_answer(request.prompt);
        if (request.want_artifact) {
            r.artifact_bytes = "mock-artifact " + echo + "\n";
            r.artifact_mime = "text/plain";
        } else {
            r.answer = echo;
        }
        r.raw_response = echo;
        r.latency_ms = elapsed_ms(start);
        return r;
    }

private:
    AdapterSpec spec_;
};

class MockScripted : public Backend {
public:
    explicit MockScripted(AdapterSpec spec) : spec_(std::move(spec)) {}

    BackendResponse call(const BackendRequest& request) override {
        const auto start = Clock::now();
        simulate_latency(spec_.latency_ms);
        auto it = spec_.answers.find(request.question_id);
        std::string text;
        if (it != spec_.answers.end()) {
            text = it->second;
        } else if (spec_.default_answer) {
            text = *spec_.default_answer;
        } else {
            throw BackendFailure("no scripted answer for " + request.question_id, 1, 0);
        }
        BackendResponse r;
        if (request.want_artifact) {
            r.artifact_bytes = text;
            r.artifact_mime = "text/plain";
        } else {
            r.answer = text;
        }
        r.raw_response = text;
        r.latency_ms = elapsed_ms(start);
        return r;
    }

private:
    AdapterSpec spec_;
};

class ExternalCommand : public Backend {
public:
    ExternalCommand(AdapterSpec spec, RetryPolicy retry) : spec_(std::move(spec)), retry_(retry) {}

    BackendResponse call(const BackendRequest& request) override {
        Json media = Json::array();
        for (const auto& m : request.media) {
            media.push_back({{"name", m.name}, {"mime", m.mime}, {"base64", base64_encode(m.bytes)}});
        }
        const Json body{{"model_name", request.model_name},
                        {"prompt", request.prompt},
                        {"media", media},
                        {"generation_params", request.generation_params},
                        {"question_id", request.question_id},
                        {"want_artifact", request.want_artifact}};
        return with_retry(retry_, [&](int) { return run_once(canonicalize(body)); });
    }

private:
    BackendResponse run_once(const std::string& input) {
        char tmpl[] = "/tmp/mmeval-req-XXXXXX";
        const int fd = mkstemp(tmpl);
        if (fd < 0) throw Transient("cannot create request file", 0);
        const fs::path req_file(tmpl);
        if (::write(fd, input.data(), input.size()) != static_cast<ssize_t>(input.size())) {
            ::close(fd);
            fs::remove(req_file);
            throw Transient("cannot write request file", 0);
        }
        ::close(fd);
        const std::string cmd = spec_.command + " < '" + req_file.string() + "'";
        FILE* pipe = popen(cmd.c_str(), "r");
        if (!pipe) {
            fs::remove(req_file);
            throw Transient("cannot start command", 0);
        }
        std::string out;
        std::array<char, 4096> buf{};
        std::size_t n;
        while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
        const int status = pclose(pipe);
        fs::remove(req_file);
        if (status != 0) {
            const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
            throw Transient("command exited with status " + std::to_string(code), 0);
        }
        Json j;
        try {
            j = Json::parse(out);
        } catch (const Json::exception& e) {
            throw BackendFailure(std::string("command printed invalid JSON: ") + e.what(), 1, 0);
        }
        BackendResponse r;
        if (j.contains("artifact_base64")) {
            r.artifact_bytes = base64_decode(j.at("artifact_base64").get<std::string>());
            r.artifact_mime = j.value("mime", "application/octet-stream");
        } else if (j.contains("answer") && j.at("answer").is_string()) {
            r.answer = j.at("answer").get<std::string>();
        } else {
            throw BackendFailure("command output has neither answer nor artifact_base64", 1, 0);
        }
        r.raw_response = out;
        return r;
    }

    AdapterSpec spec_;
    RetryPolicy retry_;
};

class OpenAIChat : public Backend {
public:
    OpenAIChat(AdapterSpec spec, RetryPolicy retry)
        : spec_(std::move(spec)), retry_(retry), url_(split_url(*spec_.endpoint_url)) {
        if (!url_.path.ends_with("/chat/completions")) url_.path += "/chat/completions";
        if (!spec_.api_key_env.empty()) {
            const char* key = std::getenv(spec_.api_key_env.c_str());
            if (!key || !*key) {
                throw EvalError(ErrorCode::INVALID_CONFIG, "environment variable " + spec_.api_key_env + " is not set");
            }
            api_key_ = key;
        }
    }

    BackendResponse call(const BackendRequest& request) override {
        if (request.want_artifact) {
            throw BackendFailure("openai_chat adapters cannot produce generation artifacts", 1, 0);
        }
        const std::string body = openai_chat_body(request).dump();
        return with_retry(retry_, [&](int) { return post_once(body); });
    }

private:
    BackendResponse post_once(const std::string& body) {
        httplib::Client client(url_.origin);
        client.set_connection_timeout(10);
        client.set_tcp_nodelay(true);
        client.set_read_timeout(spec_.timeout_s);
        client.set_write_timeout(spec_.timeout_s);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = client.Post(url_.path, headers, body, "application/json");
        if (!res) throw Transient("transport error: " + httplib::to_string(res.error()), 0);
        if (res->status == 429 || res->status >= 500) {
            throw Transient("HTTP " + std::to_string(res->status), res->status);
        }
        if (res->status < 200 || res->status >= 300) {
            throw BackendFailure("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 300), 1,
                                 res->status);
        }
        Json j;
        try {
            j = Json::parse(res->body);
        } catch (const Json::exception& e) {
            throw BackendFailure(std::string("invalid JSON from backend: ") + e.what(), 1, res->status);
        }
        BackendResponse r;
        r.answer = openai_chat_answer(j);
        r.raw_response = *r.answer;
        if (j.contains("usage") && j["usage"].is_object()) {
            r.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
            r.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
        }
        return r;
    }

    AdapterSpec spec_;
    RetryPolicy retry_;
    UrlParts url_;
    std::string api_key_;
};

}  // namespace

std::string_view to_string(BackendKind k) {
    for (const auto& [kind, name] : kKinds) {
        if (kind == k) return name;
    }
    return "mock_echo";
}

BackendKind backend_kind_from_string(std::string_view s) {
    for (const auto& [kind, name] : kKinds) {
        if (name == s) return kind;
    }
    throw EvalError(ErrorCode::INVALID_CONFIG, "unknown backend_kind '" + std::string(s) + "'");
}

void AdapterSpec::validate() const {
    auto invalid = [](const std::string& m) { throw EvalError(ErrorCode::INVALID_CONFIG, m); };
    if (model_name.empty()) invalid("adapter model_name is empty");
    if (!generation_params.is_object()) invalid("generation_params must be an object");
    canonicalize(generation_params);
    if (backend_kind == BackendKind::openai_chat && (!endpoint_url || endpoint_url->empty())) {
        invalid("openai_chat adapters need endpoint_url");
    }
    if (backend_kind == BackendKind::external_command && command.empty()) {
        invalid("external_command adapters need command");
    }
    if (latency_ms < 0) invalid("latency_ms is negative");
    if (timeout_s <= 0) invalid("timeout_s must be positive");
}

void to_json(Json& j, const AdapterSpec& v) {
    j = Json{{"adapter_id", v.adapter_id},
             {"backend_kind", to_string(v.backend_kind)},
             {"model_name", v.model_name},
             {"generation_params", v.generation_params},
             {"api_key_env", v.api_key_env},
             {"latency_ms", v.latency_ms},
             {"timeout_s", v.timeout_s}};
    if (v.endpoint_url) j["endpoint_url"] = *v.endpoint_url;
    if (!v.command.empty()) j["command"] = v.command;
    if (!v.answers.empty()) j["answers"] = v.answers;
    if (v.default_answer) j["default_answer"] = *v.default_answer;
}

void from_json(const Json& j, AdapterSpec& v) {
    v.adapter_id = j.value("adapter_id", "");
    v.backend_kind = backend_kind_from_string(j.at("backend_kind").get<std::string>());
    if (j.contains("endpoint_url") && !j["endpoint_url"].is_null()) v.endpoint_url = j["endpoint_url"].get<std::string>();
    v.model_name = j.at("model_name").get<std::string>();
    v.generation_params = j.value("generation_params", Json::object());
    if (!v.generation_params.is_object()) {
        throw EvalError(ErrorCode::INVALID_CONFIG, "generation_params must be an object");
    }
    if (!v.generation_params.contains("seed")) {
        v.generation_params["seed"] = 0;
    } else if (v.generation_params["seed"].is_null()) {
        v.generation_params.erase("seed");
    }
    v.api_key_env = j.value("api_key_env", "");
    v.command = j.value("command", "");
    v.answers = j.value("answers", std::map<std::string, std::string>{});
    if (j.contains("default_answer") && !j["default_answer"].is_null()) {
        v.default_answer = j["default_answer"].get<std::string>();
    }
    v.latency_ms = j.value("latency_ms", 0.0);
    v.timeout_s = j.value("timeout_s", 120);
    if (v.adapter_id.empty()) v.adapter_id = v.model_name;
}

AdapterSpec load_adapter_spec(const fs::path& file) {
    AdapterSpec spec;
    try {
        spec = parse_json(read_file(file)).get<AdapterSpec>();
    } catch (const Json::exception& e) {
        throw EvalError(ErrorCode::INVALID_CONFIG, file.string() + ": " + e.what());
    }
    spec.validate();
    return spec;
}

std::string mime_for(const std::string& name) {
    const auto dot = name.rfind('.');
    std::string ext = dot == std::string::npos ? "" : name.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == "png") return "image/png";
    if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
    if (ext == "gif") return "image/gif";
    if (ext == "webp") return "image/webp";
    if (ext == "bmp") return "image/bmp";
    if (ext == "mp4") return "video/mp4";
    return "application/octet-stream";
}

void to_json(Json& j, const BackendResponse& v) {
    j = Json{{"raw_response", v.raw_response},
             {"prompt_tokens", v.prompt_tokens},
             {"completion_tokens", v.completion_tokens},
             {"latency_ms", v.latency_ms},
             {"attempts", v.attempts}};
    j["answer"] = v.answer ? Json(*v.answer) : Json(nullptr);
    if (v.has_artifact()) {
        j["artifact_base64"] = base64_encode(v.artifact_bytes);
        j["artifact_mime"] = v.artifact_mime;
    }
}

void from_json(const Json& j, BackendResponse& v) {
    v.answer.reset();
    if (j.contains("answer") && !j["answer"].is_null()) v.answer = j["answer"].get<std::string>();
    v.artifact_bytes = j.contains("artifact_base64") ? base64_decode(j["artifact_base64"].get<std::string>()) : "";
    v.artifact_mime = j.value("artifact_mime", "");
    v.raw_response = j.value("raw_response", "");
    v.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
    v.completion_tokens = j.value("completion_tokens", std::int64_t{0});
    v.latency_ms = j.value("latency_ms", 0.0);
    v.attempts = j.value("attempts", 1);
    if (!v.answer && v.artifact_bytes.empty()) {
        throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "cached response has no output");
    }
}

std::string cache_key(const BackendRequest& request) {
    Json media = Json::array();
    for (const auto& m : request.media) media.push_back(sha256_hex(m.bytes));
    const Json keyed{{"model_name", request.model_name},
                     {"prompt", request.prompt},
                     {"media", media},
                     {"generation_params", request.generation_params}};
    return sha256_hex(canonicalize(keyed));
}

std::string echo_answer(std::string_view prompt) { return "echo-" + sha256_hex(prompt).substr(0, 16); }

std::unique_ptr<Backend> make_backend(const AdapterSpec& spec, const RetryPolicy& retry) {
    spec.validate();
    if (retry.max_attempts < 1) throw EvalError(ErrorCode::INVALID_CONFIG, "max_attempts must be at least 1");
    switch (spec.backend_kind) {
        case BackendKind::openai_chat: return std::make_unique<OpenAIChat>(spec, retry);
        case BackendKind::external_command: return std::make_unique<ExternalCommand>(spec, retry);
        case BackendKind::mock_echo: return std::make_unique<MockEcho>(spec);
        case BackendKind::mock_scripted: return std::make_unique<MockScripted>(spec);
    }
    throw EvalError(ErrorCode::INVALID_CONFIG, "unsupported backend kind");
}

BackendResponse call_backend(const AdapterSpec& spec, const BackendRequest& request, const RetryPolicy& retry) {
    return make_backend(spec, retry)->call(request);
}

Json openai_chat_body(const BackendRequest& request) {
    Json content = Json::array();
    content.push_back({{"type", "text"}, {"text", request.prompt}});
    for (const auto& m : request.media) {
        const std::string mime = m.mime.empty() ? mime_for(m.name) : m.mime;
        content.push_back(
            {{"type", "image_url"}, {"image_url", {{"url", "data:" + mime + ";base64," + base64_encode(m.bytes)}}}});
    }
    Json body = request.generation_params.is_object() ? request.generation_params : Json::object();
    body["model"] = request.model_name;
    body["messages"] = Json::array({{{"role", "user"}, {"content", content}}});
    return body;
}

std::string openai_chat_answer(const Json& response) {
    try {
        const Json& content = response.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        if (content.is_array()) {
            std::string text;
            for (const auto& part : content) {
                if (part.value("type", "") == "text") text += part.value("text", "");
            }
            return text;
        }
    } catch (const Json::exception&) {
    }
    throw BackendFailure("response has no choices[0].message.content", 1, 200);
}

}  // namespace mmeval
