#include "mmeval/eval_server.hpp"

#include <algorithm>
#include <set>

#include "mmeval/csv.hpp"
#include "mmeval/error.hpp"
#include "mmeval/prompt.hpp"

namespace fs = std::filesystem;

namespace mmeval {

void to_json(Json& j, const TaskProgress& v) {
    j = Json{{"task_id", v.task_id},   {"model_id", v.model_id}, {"num_samples", v.num_samples},
             {"answered", v.answered}, {"failures", v.failures}, {"finalized", v.finalized}};
}

namespace {

struct Loaded {
    std::vector<DatasetRecord> records;
    TaskMeta meta;
    fs::path media_root;
    std::map<std::string, std::size_t> index;
};

// Relative, non-empty, no parent traversal.
bool is_contained(const std::string& ref) {
    if (ref.empty()) return false;
    const fs::path p(ref);
    if (p.is_absolute() || p.has_root_name()) return false;
    for (const auto& part : p) {
        if (part == "..") return false;
    }
    return true;
}

std::string sanitize_extension(const std::string& ext) {
    std::string out;
    for (char c : ext) {
        if (c == '.' && out.empty()) continue;
        if (!std::isalnum(static_cast<unsigned char>(c)) || out.size() >= 8) {
            throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "invalid artifact extension '" + ext + "'");
        }
        out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return out.empty() ? "bin" : out;
}

}  // namespace

struct EvalServer::Task {
    TaskConfig config;
    fs::path output_dir;
    std::unique_ptr<SubmissionStore> store;
    std::mutex process_mutex;

    std::shared_ptr<const Loaded> loaded() const {
        std::lock_guard lock(loaded_mutex);
        return loaded_;
    }
    void set_loaded(std::shared_ptr<const Loaded> l) {
        std::lock_guard lock(loaded_mutex);
        loaded_ = std::move(l);
    }

private:
    mutable std::mutex loaded_mutex;
    std::shared_ptr<const Loaded> loaded_;
};

EvalServer::EvalServer(fs::path data_root, ProcessorRegistry processors)
    : root_(std::move(data_root)), processors_(std::move(processors)) {
    std::error_code ec;
    fs::create_directories(root_ / "tasks", ec);
    if (ec || !fs::is_directory(root_)) {
        throw EvalError(ErrorCode::INVALID_CONFIG, "data root is not writable: " + root_.string());
    }
    fs::create_directories(root_ / "outputs");
    annotations_ = std::make_unique<AnnotationBook>(root_ / "annotations");
    load_registry();
}

EvalServer::~EvalServer() = default;

fs::path EvalServer::processed_dir(const TaskConfig& config) const {
    const fs::path p(config.processed_dataset_path);
    return p.is_absolute() ? p : root_ / "processed" / p;
}

void EvalServer::load_processed(Task& task) const {
    auto loaded = std::make_shared<Loaded>();
    loaded->records = read_dataset_file(processed_dir(task.config) / "data.jsonl");
    loaded->meta = make_meta(task.config, loaded->records.size());
    loaded->media_root = media_root_for(task.config.dataset_path);
    for (std::size_t i = 0; i < loaded->records.size(); ++i) loaded->index[loaded->records[i].question_id] = i;
    task.set_loaded(std::move(loaded));
}

void EvalServer::load_registry() {
    for (const auto& entry : fs::directory_iterator(root_ / "tasks")) {
        if (entry.path().extension() != ".json") continue;
        auto task = std::make_shared<Task>();
        task->config = parse_json(read_file(entry.path())).get<TaskConfig>();
        task->output_dir = root_ / "outputs" / encode_path_component(task->config.task_id);
        task->store = std::make_unique<SubmissionStore>(task->output_dir);
        if (fs::exists(processed_dir(task->config) / "data.jsonl")) load_processed(*task);
        tasks_.emplace(task->config.task_id, std::move(task));
    }
}

std::shared_ptr<EvalServer::Task> EvalServer::find(const std::string& task_id) const {
    std::shared_lock lock(mutex_);
    auto it = tasks_.find(task_id);
    if (it == tasks_.end()) throw EvalError(ErrorCode::UNKNOWN_TASK, "unknown task '" + task_id + "'");
    return it->second;
}

std::shared_ptr<EvalServer::Task> EvalServer::find_processed(const std::string& task_id) const {
    auto task = find(task_id);
    if (!task->loaded()) throw EvalError(ErrorCode::TASK_NOT_PROCESSED, "task '" + task_id + "' is not processed");
    return task;
}

TaskDescriptor EvalServer::register_task(TaskConfig config, bool process_now) {
    config.validate();
    if (!processors_.contains(config.processor)) {
        throw EvalError(ErrorCode::UNKNOWN_PROCESSOR, "unknown processor '" + config.processor + "'");
    }
    std::lock_guard reg(register_mutex_);
    {
        std::shared_lock lock(mutex_);
        if (tasks_.contains(config.task_id)) {
            throw EvalError(ErrorCode::DUPLICATE_TASK, "task '" + config.task_id + "' is already registered");
        }
    }
    auto task = std::make_shared<Task>();
    task->config = config;
    task->output_dir = root_ / "outputs" / encode_path_component(config.task_id);
    if (process_now) {
        const fs::path dir = processed_dir(config);
        if (!fs::exists(dir / "data.jsonl")) run_processor(config, config.dataset_path, dir, processors_);
        load_processed(*task);
    }
    task->store = std::make_unique<SubmissionStore>(task->output_dir);
    write_file_atomic(root_ / "tasks" / (encode_path_component(config.task_id) + ".json"),
                      canonicalize(Json(config)));
    std::unique_lock lock(mutex_);
    tasks_.emplace(config.task_id, task);
    return config.descriptor();
}

TaskMeta EvalServer::process_task(const std::string& task_id) {
    auto task = find(task_id);
    std::lock_guard lock(task->process_mutex);
    if (!task->loaded()) {
        const fs::path dir = processed_dir(task->config);
        run_processor(task->config, task->config.dataset_path, dir, processors_);
        load_processed(*task);
    }
    return task->loaded()->meta;
}

std::vector<TaskDescriptor> EvalServer::get_tasks() const {
    std::shared_lock lock(mutex_);
    std::vector<TaskDescriptor> out;
    for (const auto& [id, task] : tasks_) out.push_back(task->config.descriptor());
    return out;
}

TaskDescriptor EvalServer::task_info(const std::string& task_id) const { return find(task_id)->config.descriptor(); }

TaskConfig EvalServer::task_config(const std::string& task_id) const { return find(task_id)->config; }

TaskMeta EvalServer::get_meta(const std::string& task_id) const { return find_processed(task_id)->loaded()->meta; }

SampleInfo EvalServer::get_data(const std::string& task_id, std::int64_t index) const {
    const auto loaded = find_processed(task_id)->loaded();
    if (index < 0 || static_cast<std::uint64_t>(index) >= loaded->records.size()) {
        throw EvalError(ErrorCode::INDEX_OUT_OF_RANGE, "index " + std::to_string(index) + " outside [0, " +
                                                           std::to_string(loaded->records.size()) + ")");
    }
    const auto& r = loaded->records[static_cast<std::size_t>(index)];
    SampleInfo sample{r.question_id, r.prompt, r.media_refs, r.question_type, r.options,
                      static_cast<std::uint64_t>(index)};
    sample.prompt = build_prompt(sample, loaded->meta).text;
    return sample;
}

std::vector<DatasetRecord> EvalServer::records(const std::string& task_id) const {
    return find_processed(task_id)->loaded()->records;
}

SubmitAck EvalServer::submit(const std::string& task_id, const PredictionRecord& prediction) {
    auto task = find_processed(task_id);
    const auto loaded = task->loaded();
    auto violations = validate_prediction(prediction, loaded->meta,
                                          [&](const std::string& qid) { return loaded->index.contains(qid); });
    if (!violations.empty()) {
        std::string message;
        for (const auto& v : violations) message += (message.empty() ? "" : "; ") + v.detail;
        throw EvalError(error_code_for(violations.front().kind), message);
    }
    if (prediction.artifact_ref) {
        const std::string prefix = "outputs/" + encode_path_component(task_id) + "/artifacts/";
        if (!is_contained(*prediction.artifact_ref) || !prediction.artifact_ref->starts_with(prefix) ||
            !fs::is_regular_file(root_ / *prediction.artifact_ref)) {
            throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "artifact not uploaded: " + *prediction.artifact_ref);
        }
    }
    return task->store->submit(prediction);
}

TaskProgress EvalServer::progress(const std::string& task_id, const std::string& model_id) const {
    auto task = find_processed(task_id);
    TaskProgress p{task_id, model_id, task->loaded()->records.size(), 0, 0, false};
    const auto counts = task->store->counts(model_id);
    p.answered = counts.answered;
    p.failures = counts.stored - counts.answered;
    p.finalized = fs::exists(task->output_dir / "reports" / (encode_path_component(model_id) + ".json"));
    return p;
}

std::vector<std::string> EvalServer::submitted_models(const std::string& task_id) const {
    return find(task_id)->store->models();
}

void EvalServer::set_human_judgments(const std::string& task_id, const std::string& model_id,
                                     std::vector<HumanJudgment> judgments) {
    auto task = find_processed(task_id);
    const auto loaded = task->loaded();
    for (const auto& j : judgments) {
        if (!loaded->index.contains(j.question_id)) {
            throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "unknown question_id " + j.question_id);
        }
    }
    if (model_id.empty()) throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "model_id is empty");
    task->store->set_human_judgments(model_id, std::move(judgments));
}

EvaluationReport EvalServer::finalize_and_evaluate(const std::string& task_id, const std::string& model_id) {
    auto task = find_processed(task_id);
    const auto loaded = task->loaded();
    const PredictionMap predictions = task->store->snapshot(model_id);
    const std::vector<HumanJudgment> human = task->store->human_judgments(model_id);
    if (predictions.empty() && human.empty()) {
        throw EvalError(ErrorCode::NO_SUBMISSIONS, "no submissions from '" + model_id + "' for task " + task_id);
    }

    EvaluationReport report;
    report.task_id = task_id;
    report.model_id = model_id;
    for (const auto& spec : task->config.metric_specs) {
        report.metrics.push_back(evaluate_metric(spec, predictions, loaded->records, human));
    }
    report.per_sample = report.primary().per_sample;
    report.num_samples = loaded->records.size();
    std::set<std::string> judged;
    for (const auto& j : human) judged.insert(j.question_id);
    for (const auto& r : loaded->records) {
        auto it = predictions.find(r.question_id);
        if ((it != predictions.end() && !it->second.is_failure()) || judged.contains(r.question_id)) {
            ++report.num_answered;
        }
    }
    report.num_missing = report.num_samples - report.num_answered;
    report.created_at = utc_timestamp();
    report.language = std::string(to_string(task->config.language));
    for (auto c : task->config.capability_tags) report.capabilities.emplace_back(to_string(c));

    write_file_atomic(task->output_dir / "reports" / (encode_path_component(model_id) + ".json"),
                      Json(report).dump(2) + "\n");
    return report;
}

EvaluationReport EvalServer::report(const std::string& task_id, const std::string& model_id) const {
    auto task = find(task_id);
    const fs::path file = task->output_dir / "reports" / (encode_path_component(model_id) + ".json");
    if (!fs::exists(file)) {
        throw EvalError(ErrorCode::TASK_NOT_FINALIZED, "task " + task_id + " is not finalized for " + model_id);
    }
    return parse_json(read_file(file)).get<EvaluationReport>();
}

std::string EvalServer::store_artifact(const std::string& task_id, const std::string& model_id,
                                       const std::string& question_id, const std::string& extension,
                                       std::string_view bytes) {
    auto task = find_processed(task_id);
    if (!task->loaded()->index.contains(question_id)) {
        throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "unknown question_id " + question_id);
    }
    if (model_id.empty()) throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "model_id is empty");
    if (bytes.empty()) throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "artifact is empty");
    const std::string ref = "outputs/" + encode_path_component(task_id) + "/artifacts/" +
                            encode_path_component(model_id) + "/" + encode_path_component(question_id) + "." +
                            sanitize_extension(extension);
    fs::create_directories((root_ / ref).parent_path());
    write_file_atomic(root_ / ref, bytes);
    return ref;
}

std::string EvalServer::read_artifact(const std::string& artifact_ref) const {
    if (!is_contained(artifact_ref) || !artifact_ref.starts_with("outputs/")) {
        throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "artifact ref outside the output tree: " + artifact_ref);
    }
    const fs::path file = root_ / artifact_ref;
    if (!fs::is_regular_file(file)) throw EvalError(ErrorCode::SOURCE_UNREADABLE, "no artifact at " + artifact_ref);
    return read_file(file);
}

std::string EvalServer::read_media(const std::string& task_id, const std::string& media_ref) const {
    const auto loaded = find_processed(task_id)->loaded();
    if (!is_contained(media_ref)) {
        throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "media path outside the dataset: " + media_ref);
    }
    const fs::path file = loaded->media_root / media_ref;
    if (!fs::is_regular_file(file)) throw EvalError(ErrorCode::SOURCE_UNREADABLE, "media not found: " + media_ref);
    return read_file(file);
}

AnnotationSession EvalServer::create_session_from_task(const std::string& task_id,
                                                       const std::vector<std::string>& models,
                                                       const std::vector<std::string>& annotators, std::uint64_t seed,
                                                       bool gated) {
    auto task = find_processed(task_id);
    SessionRequest request;
    request.annotators = annotators;
    request.seed = seed;
    request.gated = gated;
    for (const auto& r : task->loaded()->records) request.prompts.push_back({r.question_id, r.prompt});
    const std::vector<std::string> chosen = models.empty() ? task->store->models() : models;
    for (const auto& model : chosen) {
        auto& outputs = request.model_outputs[model];
        for (const auto& [qid, pred] : task->store->snapshot(model)) {
            if (pred.artifact_ref && !pred.is_failure()) outputs[qid] = *pred.artifact_ref;
        }
    }
    return annotations_->create(request);
}

std::string EvalServer::read_slot_artifact(const std::string& session_id, const std::string& prompt_id,
                                           int slot) const {
    const AnnotationSession session = annotations_->session(session_id);
    const PromptEntry& entry = session.entry(prompt_id);
    if (slot < 0 || static_cast<std::size_t>(slot) >= entry.slots.size()) {
        throw EvalError(ErrorCode::INVALID_SCORE, "slot " + std::to_string(slot) + " does not exist");
    }
    return read_artifact(entry.slots[static_cast<std::size_t>(slot)].artifact_ref);
}

}  // namespace mmeval
