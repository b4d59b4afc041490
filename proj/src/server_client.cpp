#include "mmeval/server_client.hpp"

#include <httplib.h>

#include "mmeval/error.hpp"

namespace mmeval {

UrlParts split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw EvalError(ErrorCode::INVALID_CONFIG, "URL without scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    UrlParts parts;
    parts.origin = url.substr(0, slash);
    parts.path = slash == std::string::npos ? "" : url.substr(slash);
    while (!parts.path.empty() && parts.path.back() == '/') parts.path.pop_back();
    return parts;
}

std::string url_encode(const std::string& text) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : text) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out += static_cast<char>(c);
        } else {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 15];
        }
    }
    return out;
}

struct ServerClient::Impl {
    UrlParts url;
    httplib::Client http;

    Impl(const std::string& base, int timeout) : url(split_url(base)), http(url.origin) {
        http.set_keep_alive(true);
        http.set_tcp_nodelay(true);
        http.set_connection_timeout(5);
        http.set_read_timeout(timeout);
        http.set_write_timeout(timeout);
    }

    [[noreturn]] void transport_error(const httplib::Result& r, const std::string& path) {
        throw EvalError(ErrorCode::SERVER_UNREACHABLE,
                        "server " + url.origin + " unreachable (" + httplib::to_string(r.error()) + ") on " + path);
    }

    const httplib::Response& check(const httplib::Result& r, const std::string& path) {
        if (!r) transport_error(r, path);
        if (r->status >= 200 && r->status < 300) return *r;
        ErrorEnvelope env{ErrorCode::INTERNAL, "HTTP " + std::to_string(r->status) + " on " + path};
        try {
            env = decode<ErrorEnvelope>(std::string_view(r->body));
        } catch (const std::exception&) {
        }
        throw EvalError(env.code, env.message);
    }

    std::string get(const std::string& path) {
        auto r = http.Get(url.path + path);
        return check(r, path).body;
    }

    std::string post(const std::string& path, const std::string& body, const char* type) {
        auto r = http.Post(url.path + path, body, type);
        return check(r, path).body;
    }
};

ServerClient::ServerClient(const std::string& base_url, int timeout_seconds)
    : impl_(std::make_unique<Impl>(base_url, timeout_seconds)) {}

ServerClient::~ServerClient() = default;

Json ServerClient::get_json(const std::string& path) { return parse_json(impl_->get(path)); }

Json ServerClient::post_json(const std::string& path, const Json& body) {
    return parse_json(impl_->post(path, canonicalize(body), "application/json"));
}

std::string ServerClient::get_bytes(const std::string& path) { return impl_->get(path); }

std::vector<TaskDescriptor> ServerClient::get_tasks() { return decode<std::vector<TaskDescriptor>>(get_json("/tasks")); }

TaskDescriptor ServerClient::task_info(const std::string& task_id) {
    return decode<TaskDescriptor>(get_json("/tasks/" + url_encode(task_id)));
}

TaskMeta ServerClient::get_meta(const std::string& task_id) {
    return decode<TaskMeta>(get_json("/tasks/" + url_encode(task_id) + "/meta"));
}

SampleInfo ServerClient::get_data(const std::string& task_id, std::uint64_t index) {
    return decode<SampleInfo>(get_json("/tasks/" + url_encode(task_id) + "/data/" + std::to_string(index)));
}

SubmitAck ServerClient::submit(const PredictionRecord& prediction) {
    const Json ack = post_json("/tasks/" + url_encode(prediction.task_id) + "/submit", Json(prediction));
    return {ack.at("answered").get<std::uint64_t>(), ack.at("stored").get<std::uint64_t>()};
}

TaskDescriptor ServerClient::register_task(const TaskConfig& config, bool process_now) {
    return decode<TaskDescriptor>(post_json(process_now ? "/tasks" : "/tasks?process=0", Json(config)));
}

EvaluationReport ServerClient::finalize(const std::string& task_id, const std::string& model_id) {
    return post_json("/tasks/" + url_encode(task_id) + "/finalize?model=" + url_encode(model_id), Json::object())
        .get<EvaluationReport>();
}

EvaluationReport ServerClient::report(const std::string& task_id, const std::string& model_id) {
    return get_json("/tasks/" + url_encode(task_id) + "/report?model=" + url_encode(model_id)).get<EvaluationReport>();
}

Json ServerClient::progress(const std::string& task_id, const std::string& model_id) {
    return get_json("/tasks/" + url_encode(task_id) + "/progress?model=" + url_encode(model_id));
}

std::string ServerClient::media(const std::string& task_id, const std::string& media_ref) {
    return get_bytes("/tasks/" + url_encode(task_id) + "/media?path=" + url_encode(media_ref));
}

std::string ServerClient::upload_artifact(const std::string& task_id, const std::string& model_id,
                                          const std::string& question_id, const std::string& extension,
                                          const std::string& bytes) {
    const std::string path = "/tasks/" + url_encode(task_id) + "/artifacts?model=" + url_encode(model_id) +
                             "&question_id=" + url_encode(question_id) + "&ext=" + url_encode(extension);
    return parse_json(impl_->post(path, bytes, "application/octet-stream")).at("artifact_ref").get<std::string>();
}

}  // namespace mmeval
