#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mmeval/dataset.hpp"
#include "mmeval/protocol.hpp"
#include "mmeval/report.hpp"
#include "mmeval/submission_store.hpp"

namespace mmeval {

struct UrlParts {
    std::string origin;  // scheme://host[:port]
    std::string path;    // prefix without trailing slash, possibly empty
};

UrlParts split_url(const std::string& url);

// Protocol client for one server. Not thread-safe; use one per thread.
// Error envelopes are rethrown as EvalError with the server's code; transport
// failures raise SERVER_UNREACHABLE.
class ServerClient {
public:
    explicit ServerClient(const std::string& base_url, int timeout_seconds = 60);
    ~ServerClient();

    ServerClient(const ServerClient&) = delete;
    ServerClient& operator=(const ServerClient&) = delete;

    std::vector<TaskDescriptor> get_tasks();
    TaskDescriptor task_info(const std::string& task_id);
    TaskMeta get_meta(const std::string& task_id);
    SampleInfo get_data(const std::string& task_id, std::uint64_t index);
    SubmitAck submit(const PredictionRecord& prediction);

    TaskDescriptor register_task(const TaskConfig& config, bool process_now = true);
    EvaluationReport finalize(const std::string& task_id, const std::string& model_id);
    EvaluationReport report(const std::string& task_id, const std::string& model_id);
    Json progress(const std::string& task_id, const std::string& model_id);

    std::string media(const std::string& task_id, const std::string& media_ref);
    std::string upload_artifact(const std::string& task_id, const std::string& model_id,
                                const std::string& question_id, const std::string& extension,
                                const std::string& bytes);

    Json get_json(const std::string& path);
    Json post_json(const std::string& path, const Json& body);
    std::string get_bytes(const std::string& path);

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

std::string url_encode(const std::string& text);

}  // namespace mmeval
