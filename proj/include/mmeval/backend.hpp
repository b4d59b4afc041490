#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mmeval/canonical.hpp"
#include "mmeval/error.hpp"

namespace mmeval {

enum class BackendKind { openai_chat, external_command, mock_echo, mock_scripted };

std::string_view to_string(BackendKind k);
BackendKind backend_kind_from_string(std::string_view s);

struct RetryPolicy {
    int max_attempts = 3;
    int base_backoff_ms = 500;

    // Delay before attempt `attempt + 1`, given `attempt` failures so far.
    int backoff_ms(int attempt) const { return base_backoff_ms << (attempt - 1); }
};

// Adapter config file (JSON). Kind-specific fields:
//   openai_chat      endpoint_url, api_key_env, timeout_s
//   external_command command (request JSON on stdin, response JSON on stdout)
//   mock_scripted    answers {question_id: answer}, default_answer
//   mock_*           latency_ms of simulated work per call
// generation_params gets "seed": 0 unless it sets one; "seed": null removes it.
struct AdapterSpec {
    std::string adapter_id;
    BackendKind backend_kind = BackendKind::mock_echo;
    std::optional<std::string> endpoint_url;
    std::string model_name;
    Json generation_params = Json::object();
    std::string api_key_env;
    std::string command;
    std::map<std::string, std::string> answers;
    std::optional<std::string> default_answer;
    double latency_ms = 0.0;
    int timeout_s = 120;

    void validate() const;
};

void to_json(Json& j, const AdapterSpec& v);
void from_json(const Json& j, AdapterSpec& v);
AdapterSpec load_adapter_spec(const std::filesystem::path& file);

struct MediaPayload {
    std::string name;  // media ref as served
    std::string mime;
    std::string bytes;
};

std::string mime_for(const std::string& name);

struct BackendRequest {
    std::string model_name;
    std::string prompt;
    std::vector<MediaPayload> media;
    Json generation_params = Json::object();
    // Routing hints; not part of the cache key.
    std::string question_id;
    bool want_artifact = false;
};

struct BackendResponse {
    std::optional<std::string> answer;
    std::string artifact_bytes;
    std::string artifact_mime;
    std::string raw_response;
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    double latency_ms = 0.0;
    int attempts = 1;

    bool has_artifact() const { return !artifact_bytes.empty(); }
};

// Cache form; artifact bytes are base64 encoded.
void to_json(Json& j, const BackendResponse& v);
void from_json(const Json& j, BackendResponse& v);

// SHA-256 hex over canonicalize({model_name, prompt, media: [sha256 of each
// payload in order], generation_params}).
std::string cache_key(const BackendRequest& request);

// The mock_echo transform: "echo-" followed by the first 16 hex digits of
// sha256(prompt).
std::string echo_answer(std::string_view prompt);

// Terminal backend failure after retries, or a non-retryable response.
class BackendFailure : public EvalError {
public:
    BackendFailure(const std::string& message, int attempts, int status)
        : EvalError(ErrorCode::BACKEND_ERROR, message), attempts_(attempts), status_(status) {}
    int attempts() const { return attempts_; }
    int status() const { return status_; }

private:
    int attempts_;
    int status_;
};

class Backend {
public:
    virtual ~Backend() = default;
    // Thread-safe. Throws BackendFailure.
    virtual BackendResponse call(const BackendRequest& request) = 0;
};

std::unique_ptr<Backend> make_backend(const AdapterSpec& spec, const RetryPolicy& retry = {});

BackendResponse call_backend(const AdapterSpec& spec, const BackendRequest& request, const RetryPolicy& retry = {});

// OpenAI-style chat-completion body with inline base64 image parts.
Json openai_chat_body(const BackendRequest& request);
// Text of the first choice; throws BackendFailure when absent.
std::string openai_chat_answer(const Json& response);

}  // namespace mmeval
