#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "mmeval/annotation.hpp"
#include "mmeval/dataset.hpp"
#include "mmeval/report.hpp"
#include "mmeval/submission_store.hpp"

namespace mmeval {

struct TaskProgress {
    std::string task_id;
    std::string model_id;
    std::uint64_t num_samples = 0;
    std::uint64_t answered = 0;
    std::uint64_t failures = 0;
    bool finalized = false;
};

void to_json(Json& j, const TaskProgress& v);

// Server state rooted at one directory:
//   tasks/<task>.json                    registered configs
//   processed/<processed_dataset_path>/  standardized data.jsonl (relative paths)
//   outputs/<task>/submissions/          prediction logs
//   outputs/<task>/reports/<model>.json  evaluation reports
//   outputs/<task>/artifacts/<model>/    uploaded generation outputs
//   annotations/                         annotation sessions and scores
// Artifact refs are paths relative to the data root.
class EvalServer {
public:
    explicit EvalServer(std::filesystem::path data_root, ProcessorRegistry processors = {});
    ~EvalServer();

    EvalServer(const EvalServer&) = delete;
    EvalServer& operator=(const EvalServer&) = delete;

    const std::filesystem::path& data_root() const { return root_; }

    // Processes the dataset before the task becomes visible unless the
    // processed file already exists; a failure leaves the registry unchanged.
    // With process_now=false the task is registered unprocessed.
    TaskDescriptor register_task(TaskConfig config, bool process_now = true);
    TaskMeta process_task(const std::string& task_id);

    std::vector<TaskDescriptor> get_tasks() const;
    TaskDescriptor task_info(const std::string& task_id) const;
    TaskConfig task_config(const std::string& task_id) const;
    TaskMeta get_meta(const std::string& task_id) const;
    SampleInfo get_data(const std::string& task_id, std::int64_t index) const;
    std::vector<DatasetRecord> records(const std::string& task_id) const;

    SubmitAck submit(const std::string& task_id, const PredictionRecord& prediction);
    TaskProgress progress(const std::string& task_id, const std::string& model_id) const;
    std::vector<std::string> submitted_models(const std::string& task_id) const;

    void set_human_judgments(const std::string& task_id, const std::string& model_id,
                             std::vector<HumanJudgment> judgments);

    EvaluationReport finalize_and_evaluate(const std::string& task_id, const std::string& model_id);
    // Last persisted report; TASK_NOT_FINALIZED when none exists.
    EvaluationReport report(const std::string& task_id, const std::string& model_id) const;

    // Stores generated output bytes and returns the artifact ref.
    std::string store_artifact(const std::string& task_id, const std::string& model_id,
                               const std::string& question_id, const std::string& extension, std::string_view bytes);
    std::string read_artifact(const std::string& artifact_ref) const;
    std::string read_media(const std::string& task_id, const std::string& media_ref) const;

    // Builds a session from the task's prompts and each model's submitted artifacts.
    AnnotationSession create_session_from_task(const std::string& task_id, const std::vector<std::string>& models,
                                               const std::vector<std::string>& annotators, std::uint64_t seed,
                                               bool gated = true);
    AnnotationBook& annotations() { return *annotations_; }

    // Reads a file from a session slot without exposing the model id.
    std::string read_slot_artifact(const std::string& session_id, const std::string& prompt_id, int slot) const;

private:
    struct Task;

    std::shared_ptr<Task> find(const std::string& task_id) const;
    std::shared_ptr<Task> find_processed(const std::string& task_id) const;
    std::filesystem::path processed_dir(const TaskConfig& config) const;
    void load_processed(Task& task) const;
    void load_registry();

    std::filesystem::path root_;
    ProcessorRegistry processors_;
    std::mutex register_mutex_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<Task>> tasks_;
    std::unique_ptr<AnnotationBook> annotations_;
};

}  // namespace mmeval
