#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "mmeval/metrics.hpp"
#include "mmeval/protocol.hpp"

namespace mmeval {

struct SubmitAck {
    std::uint64_t answered = 0;  // stored non-failure predictions for this model
    std::uint64_t stored = 0;    // all stored records, failures included
};

// Predictions for one task, keyed by (model_id, question_id), persisted as
// one append-only log per model under `dir`. Resubmission policy:
//   identical outcome          -> no-op
//   replaces a failure record  -> accepted
//   failure after a success    -> ignored, success kept
//   any other difference       -> DUPLICATE_SUBMISSION, store unchanged
class SubmissionStore {
public:
    explicit SubmissionStore(std::filesystem::path dir);
    ~SubmissionStore();

    SubmissionStore(const SubmissionStore&) = delete;
    SubmissionStore& operator=(const SubmissionStore&) = delete;

    SubmitAck submit(const PredictionRecord& record);

    PredictionMap snapshot(const std::string& model_id) const;
    SubmitAck counts(const std::string& model_id) const;
    std::vector<std::string> models() const;

    void set_human_judgments(const std::string& model_id, std::vector<HumanJudgment> judgments);
    std::vector<HumanJudgment> human_judgments(const std::string& model_id) const;

private:
    enum class Outcome { unchanged, stored, ignored };
    static Outcome apply(PredictionMap& map, const PredictionRecord& record);
    void replay();
    int log_fd(const std::string& model_id);

    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::map<std::string, PredictionMap> by_model_;
    std::map<std::string, int> fds_;
};

// Filesystem-safe, reversible encoding of ids ([A-Za-z0-9._-] kept, rest %XX).
std::string encode_path_component(const std::string& id);
std::string decode_path_component(const std::string& name);

// Writes bytes to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace mmeval
