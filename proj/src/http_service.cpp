#include "mmeval/http_service.hpp"

#include <httplib.h>

#include <charconv>
#include <thread>

#include "mmeval/error.hpp"

namespace mmeval {

namespace {

constexpr const char* kJson = "application/json";

std::string content_type_for(const std::string& path) {
    const auto dot = path.rfind('.');
    std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
    for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (ext == "png") return "image/png";
    if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
    if (ext == "gif") return "image/gif";
    if (ext == "webp") return "image/webp";
    if (ext == "mp4") return "video/mp4";
    if (ext == "json") return kJson;
    if (ext == "txt") return "text/plain";
    return "application/octet-stream";
}

void reply(httplib::Response& res, const Json& body, int status = 200) {
    res.status = status;
    res.set_content(canonicalize(body), kJson);
}

void reply_error(httplib::Response& res, ErrorCode code, const std::string& message, Json extra = Json::object()) {
    Json body = ErrorEnvelope{code, message};
    for (auto& [k, v] : extra.items()) body[k] = v;
    reply(res, body, http_status(code));
}

std::string required_param(const httplib::Request& req, const char* name) {
    if (!req.has_param(name) || req.get_param_value(name).empty()) {
        throw EvalError(ErrorCode::MALFORMED_PAYLOAD, std::string("missing query parameter '") + name + "'");
    }
    return req.get_param_value(name);
}

bool flag_param(const httplib::Request& req, const char* name, bool fallback) {
    if (!req.has_param(name)) return fallback;
    const std::string v = req.get_param_value(name);
    return !(v == "0" || v == "false" || v == "no");
}

template <typename Handler>
httplib::Server::Handler guarded(Handler handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
        try {
            handler(req, res);
        } catch (const QualityCheckError& e) {
            Json issues = Json::array();
            for (const auto& i : e.issues()) issues.push_back({{"question_id", i.question_id}, {"problem", i.problem}});
            reply_error(res, e.code(), e.what(), {{"issues", issues}});
        } catch (const EvalError& e) {
            reply_error(res, e.code(), e.what());
        } catch (const Json::exception& e) {
            reply_error(res, ErrorCode::MALFORMED_PAYLOAD, e.what());
        } catch (const std::invalid_argument& e) {
            reply_error(res, ErrorCode::MALFORMED_PAYLOAD, e.what());
        } catch (const std::exception& e) {
            reply_error(res, ErrorCode::INTERNAL, e.what());
        }
    };
}

}  // namespace

struct HttpService::Impl {
    EvalServer& server;
    httplib::Server http;
    std::thread thread;
    int port = -1;

    Impl(EvalServer& s, int threads) : server(s) {
        http.new_task_queue = [threads] { return new httplib::ThreadPool(static_cast<std::size_t>(threads)); };
        http.set_payload_max_length(256u << 20);
        http.set_tcp_nodelay(true);
        // SO_REUSEADDR only, so a second server cannot share a bound port.
        http.set_socket_options([](socket_t sock) {
            int yes = 1;
            setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
        });
        http.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
        http.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
            res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
        routes();
    }

    void routes();
};

void HttpService::Impl::routes() {
    auto& s = server;

    http.Get("/health", guarded([](const httplib::Request&, httplib::Response& res) {
                 reply(res, Json{{"status", "ok"}, {"protocol_version", kProtocolVersion}});
             }));

    http.Get("/tasks", guarded([&s](const httplib::Request&, httplib::Response& res) {
                 reply(res, Json(s.get_tasks()));
             }));

    http.Post("/tasks", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                  const auto config = parse_json(req.body).get<TaskConfig>();
                  reply(res, Json(s.register_task(config, flag_param(req, "process", true))), 201);
              }));

    http.Get(R"(/tasks/([^/]+))", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 reply(res, Json(s.task_info(req.matches[1])));
             }));

    http.Get(R"(/tasks/([^/]+)/config)", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 reply(res, Json(s.task_config(req.matches[1])));
             }));

    http.Get(R"(/tasks/([^/]+)/meta)", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 reply(res, Json(s.get_meta(req.matches[1])));
             }));

    http.Get(R"(/tasks/([^/]+)/data/(-?\d+))", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 const std::string text = req.matches[2];
                 std::int64_t index = -1;
                 auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), index);
                 if (ec != std::errc() || ptr != text.data() + text.size()) index = -1;
                 reply(res, Json(s.get_data(req.matches[1], index)));
             }));

    http.Post(R"(/tasks/([^/]+)/process)", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                  reply(res, Json(s.process_task(req.matches[1])));
              }));

    http.Post(R"(/tasks/([^/]+)/submit)", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                  const auto pred = decode<PredictionRecord>(std::string_view(req.body));
                  const auto ack = s.submit(req.matches[1], pred);
                  reply(res, Json{{"answered", ack.answered}, {"stored", ack.stored}});
              }));

    http.Post(R"(/tasks/([^/]+)/finalize)", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                  reply(res, Json(s.finalize_and_evaluate(req.matches[1], required_param(req, "model"))));
              }));

    http.Get(R"(/tasks/([^/]+)/report)", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 reply(res, Json(s.report(req.matches[1], required_param(req, "model"))));
             }));

    http.Get(R"(/tasks/([^/]+)/progress)", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 reply(res, Json(s.progress(req.matches[1], required_param(req, "model"))));
             }));

    http.Get(R"(/tasks/([^/]+)/models)", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 reply(res, Json(s.submitted_models(req.matches[1])));
             }));

    http.Post(R"(/tasks/([^/]+)/human_judgments)",
              guarded([&s](const httplib::Request& req, httplib::Response& res) {
                  auto judgments = parse_json(req.body).get<std::vector<HumanJudgment>>();
                  const auto n = judgments.size();
                  s.set_human_judgments(req.matches[1], required_param(req, "model"), std::move(judgments));
                  reply(res, Json{{"stored", n}});
              }));

    http.Get(R"(/tasks/([^/]+)/media)", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 const std::string path = required_param(req, "path");
                 res.set_content(s.read_media(req.matches[1], path), content_type_for(path));
             }));

    http.Post(R"(/tasks/([^/]+)/artifacts)", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                  const std::string ext = req.has_param("ext") ? req.get_param_value("ext") : "bin";
                  const std::string ref = s.store_artifact(req.matches[1], required_param(req, "model"),
                                                           required_param(req, "question_id"), ext, req.body);
                  reply(res, Json{{"artifact_ref", ref}}, 201);
              }));

    http.Get("/artifacts", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 const std::string ref = required_param(req, "ref");
                 res.set_content(s.read_artifact(ref), content_type_for(ref));
             }));

    // Annotation. Creating a session returns the full layout to the caller;
    // annotator-facing reads go through the blind view.
    http.Post("/annotation/sessions", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                  const Json body = parse_json(req.body);
                  const auto annotators = body.at("annotators").get<std::vector<std::string>>();
                  const auto seed = body.at("seed").get<std::uint64_t>();
                  const bool gated = body.value("gated", true);
                  AnnotationSession session;
                  if (body.contains("task_id")) {
                      session = s.create_session_from_task(
                          body.at("task_id").get<std::string>(),
                          body.value("models", std::vector<std::string>{}), annotators, seed, gated);
                  } else {
                      SessionRequest request;
                      for (const auto& p : body.at("prompts")) {
                          request.prompts.push_back(
                              {p.at("prompt_id").get<std::string>(), p.at("text").get<std::string>()});
                      }
                      body.at("model_outputs").get_to(request.model_outputs);
                      request.annotators = annotators;
                      request.seed = seed;
                      request.gated = gated;
                      session = s.annotations().create(request);
                  }
                  reply(res, Json(session), 201);
              }));

    http.Get(R"(/annotation/sessions/([^/]+))", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 std::optional<std::string> annotator;
                 if (req.has_param("annotator")) annotator = req.get_param_value("annotator");
                 reply(res, s.annotations().blind_view(req.matches[1], annotator));
             }));

    http.Get(R"(/annotation/sessions/([^/]+)/layout)",
             guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 const auto session = s.annotations().session(req.matches[1]);
                 if (!session.closed) {
                     throw EvalError(ErrorCode::SESSION_NOT_CLOSED, "layout is hidden until the session closes");
                 }
                 reply(res, Json(session));
             }));

    http.Get(R"(/annotation/sessions/([^/]+)/artifact)",
             guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 const std::string prompt_id = required_param(req, "prompt_id");
                 const std::string slot_text = required_param(req, "slot");
                 int slot = -1;
                 std::from_chars(slot_text.data(), slot_text.data() + slot_text.size(), slot);
                 const std::string bytes = s.read_slot_artifact(req.matches[1], prompt_id, slot);
                 res.set_content(bytes, "application/octet-stream");
             }));

    http.Post("/annotation/scores", guarded([&s](const httplib::Request& req, httplib::Response& res) {
                  const auto input = parse_json(req.body).get<ScoreInput>();
                  s.annotations().record(input);
                  reply(res, Json{{"session_id", input.session_id},
                                  {"annotator_id", input.annotator_id},
                                  {"round", input.round},
                                  {"prompt_id", input.prompt_id},
                                  {"slot", input.slot},
                                  {"dimension", to_string(input.dimension)},
                                  {"value", input.value}});
              }));

    http.Post(R"(/annotation/sessions/([^/]+)/close)",
              guarded([&s](const httplib::Request& req, httplib::Response& res) {
                  s.annotations().close(req.matches[1]);
                  reply(res, Json{{"session_id", std::string(req.matches[1])}, {"closed", true}});
              }));

    http.Get(R"(/annotation/sessions/([^/]+)/report)",
             guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 reply(res, report_json(s.annotations().report(req.matches[1])));
             }));

    http.Get(R"(/annotation/sessions/([^/]+)/scores)",
             guarded([&s](const httplib::Request& req, httplib::Response& res) {
                 const auto session = s.annotations().session(req.matches[1]);
                 if (!session.closed) {
                     throw EvalError(ErrorCode::SESSION_NOT_CLOSED, "scores are hidden until the session closes");
                 }
                 reply(res, Json(s.annotations().scores(req.matches[1])));
             }));
}

HttpService::HttpService(EvalServer& server, int worker_threads)
    : impl_(std::make_unique<Impl>(server, worker_threads)) {}

HttpService::~HttpService() { stop(); }

int HttpService::bind(const std::string& host, int port) {
    if (port == 0) {
        impl_->port = impl_->http.bind_to_any_port(host);
    } else {
        impl_->port = impl_->http.bind_to_port(host, port) ? port : -1;
    }
    if (impl_->port < 0) {
        throw std::runtime_error("cannot bind " + host + ":" + std::to_string(port));
    }
    return impl_->port;
}

void HttpService::listen() { impl_->http.listen_after_bind(); }

int HttpService::start(const std::string& host, int port) {
    const int bound = bind(host, port);
    impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
    impl_->http.wait_until_ready();
    return bound;
}

void HttpService::stop() {
    if (!impl_) return;
    impl_->http.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

int HttpService::port() const { return impl_->port; }

std::pair<std::string, int> parse_bind_address(const std::string& text) {
    std::string host = "127.0.0.1";
    std::string port_text = text;
    const auto colon = text.rfind(':');
    if (colon != std::string::npos) {
        if (colon > 0) host = text.substr(0, colon);
        port_text = text.substr(colon + 1);
    }
    int port = -1;
    auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc() || ptr != port_text.data() + port_text.size() || port < 0 || port > 65535) {
        throw std::invalid_argument("invalid bind address '" + text + "'");
    }
    return {host, port};
}

}  // namespace mmeval
