#include "mmeval/protocol.hpp"

#include <set>

namespace mmeval {

namespace {

template <typename T>
void put_optional(Json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

template <typename T>
void get_optional(const Json& j, const char* key, std::optional<T>& out) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) {
        out.reset();
    } else {
        out = it->template get<T>();
    }
}

int get_version(const Json& j) {
    auto it = j.find("protocol_version");
    return it == j.end() ? kProtocolVersion : it->get<int>();
}

}  // namespace

std::string_view to_string(TaskType t) {
    switch (t) {
        case TaskType::VQA: return "VQA";
        case TaskType::T2I: return "T2I";
        case TaskType::T2V: return "T2V";
        case TaskType::RETRIEVAL: return "RETRIEVAL";
    }
    return "VQA";
}

std::string_view to_string(QuestionType q) {
    switch (q) {
        case QuestionType::multiple_choice: return "multiple_choice";
        case QuestionType::open_ended: return "open_ended";
        case QuestionType::generation: return "generation";
    }
    return "open_ended";
}

TaskType task_type_from_string(std::string_view s) {
    if (s == "VQA") return TaskType::VQA;
    if (s == "T2I") return TaskType::T2I;
    if (s == "T2V") return TaskType::T2V;
    if (s == "RETRIEVAL") return TaskType::RETRIEVAL;
    throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "unknown task_type: " + std::string(s));
}

QuestionType question_type_from_string(std::string_view s) {
    if (s == "multiple_choice") return QuestionType::multiple_choice;
    if (s == "open_ended") return QuestionType::open_ended;
    if (s == "generation") return QuestionType::generation;
    throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "unknown question_type: " + std::string(s));
}

bool PredictionRecord::same_outcome(const PredictionRecord& other) const {
    return answer == other.answer && artifact_ref == other.artifact_ref && error == other.error;
}

void to_json(Json& j, const ChoiceOption& v) { j = Json{{"label", v.label}, {"text", v.text}}; }

void from_json(const Json& j, ChoiceOption& v) {
    j.at("label").get_to(v.label);
    j.at("text").get_to(v.text);
}

void to_json(Json& j, const TaskDescriptor& v) {
    j = Json{{"task_id", v.task_id},
             {"task_type", to_string(v.task_type)},
             {"display_name", v.display_name},
             {"protocol_version", v.protocol_version}};
}

void from_json(const Json& j, TaskDescriptor& v) {
    j.at("task_id").get_to(v.task_id);
    v.task_type = task_type_from_string(j.at("task_type").get<std::string>());
    v.display_name = j.value("display_name", std::string{});
    v.protocol_version = get_version(j);
}

void to_json(Json& j, const TaskMeta& v) {
    j = Json{{"task_id", v.task_id},
             {"num_samples", v.num_samples},
             {"task_type", to_string(v.task_type)},
             {"output_dir", v.output_dir},
             {"prompt_template", v.prompt_template},
             {"metric_specs", v.metric_specs},
             {"protocol_version", v.protocol_version}};
}

void from_json(const Json& j, TaskMeta& v) {
    j.at("task_id").get_to(v.task_id);
    j.at("num_samples").get_to(v.num_samples);
    v.task_type = task_type_from_string(j.at("task_type").get<std::string>());
    j.at("output_dir").get_to(v.output_dir);
    v.prompt_template = j.value("prompt_template", std::string{});
    v.metric_specs = j.value("metric_specs", std::vector<std::string>{});
    v.protocol_version = get_version(j);
}

void to_json(Json& j, const SampleInfo& v) {
    j = Json{{"question_id", v.question_id},
             {"prompt", v.prompt},
             {"media_refs", v.media_refs},
             {"question_type", to_string(v.question_type)},
             {"index", v.index}};
    put_optional(j, "options", v.options);
}

void from_json(const Json& j, SampleInfo& v) {
    j.at("question_id").get_to(v.question_id);
    j.at("prompt").get_to(v.prompt);
    v.media_refs = j.value("media_refs", std::vector<std::string>{});
    v.question_type = question_type_from_string(j.at("question_type").get<std::string>());
    get_optional(j, "options", v.options);
    j.at("index").get_to(v.index);
}

void to_json(Json& j, const PredictionRecord& v) {
    j = Json{{"task_id", v.task_id},
             {"question_id", v.question_id},
             {"model_id", v.model_id},
             {"from_cache", v.from_cache}};
    put_optional(j, "answer", v.answer);
    put_optional(j, "artifact_ref", v.artifact_ref);
    put_optional(j, "raw_response", v.raw_response);
    put_optional(j, "latency_ms", v.latency_ms);
    put_optional(j, "error", v.error);
}

void from_json(const Json& j, PredictionRecord& v) {
    j.at("task_id").get_to(v.task_id);
    j.at("question_id").get_to(v.question_id);
    j.at("model_id").get_to(v.model_id);
    get_optional(j, "answer", v.answer);
    get_optional(j, "artifact_ref", v.artifact_ref);
    get_optional(j, "raw_response", v.raw_response);
    get_optional(j, "latency_ms", v.latency_ms);
    v.from_cache = j.value("from_cache", false);
    get_optional(j, "error", v.error);
}

void to_json(Json& j, const ErrorEnvelope& v) {
    j = Json{{"code", to_string(v.code)}, {"message", v.message}};
}

void from_json(const Json& j, ErrorEnvelope& v) {
    v.code = error_code_from_string(j.at("code").get<std::string>());
    j.at("message").get_to(v.message);
}

ErrorCode error_code_for(ViolationKind kind) {
    switch (kind) {
        case ViolationKind::index_out_of_range: return ErrorCode::INDEX_OUT_OF_RANGE;
        case ViolationKind::task_mismatch: return ErrorCode::UNKNOWN_TASK;
        default: return ErrorCode::MALFORMED_PAYLOAD;
    }
}

std::vector<Violation> validate_sample(const SampleInfo& sample, const TaskMeta& meta) {
    std::vector<Violation> out;
    if (sample.index >= meta.num_samples) {
        out.push_back({ViolationKind::index_out_of_range,
                       "index " + std::to_string(sample.index) + " >= num_samples " +
                           std::to_string(meta.num_samples)});
    }
    if (sample.question_id.empty()) {
        out.push_back({ViolationKind::empty_question_id, "question_id is empty"});
    }
    const bool generation_task = produces_artifacts(meta.task_type);
    const bool generation_question = sample.question_type == QuestionType::generation;
    if (generation_task != generation_question) {
        out.push_back({ViolationKind::question_type_mismatch,
                       std::string(to_string(sample.question_type)) + " question in " +
                           std::string(to_string(meta.task_type)) + " task"});
    }
    const bool has_options = sample.options && !sample.options->empty();
    if (sample.question_type == QuestionType::multiple_choice && !has_options) {
        out.push_back({ViolationKind::missing_options, "multiple_choice sample without options"});
    }
    if (sample.question_type == QuestionType::generation && has_options) {
        out.push_back({ViolationKind::unexpected_options, "generation sample carries options"});
    }
    if (sample.options) {
        std::set<std::string> seen;
        for (const auto& opt : *sample.options) {
            if (opt.label.empty()) {
                out.push_back({ViolationKind::empty_option_label, "option with empty label"});
            } else if (!seen.insert(opt.label).second) {
                out.push_back({ViolationKind::duplicate_option_label, "duplicate option label " + opt.label});
            }
        }
    }
    return out;
}

std::vector<Violation> validate_prediction(const PredictionRecord& pred, const TaskMeta& meta,
                                           const QuestionLookup& has_question) {
    std::vector<Violation> out;
    if (pred.task_id != meta.task_id) {
        out.push_back({ViolationKind::task_mismatch,
                       "prediction for task " + pred.task_id + " sent to " + meta.task_id});
    }
    if (pred.model_id.empty()) {
        out.push_back({ViolationKind::empty_model_id, "model_id is empty"});
    }
    if (!has_question || !has_question(pred.question_id)) {
        out.push_back({ViolationKind::unknown_question, "unknown question_id " + pred.question_id});
    }
    if (pred.latency_ms && *pred.latency_ms < 0) {
        out.push_back({ViolationKind::negative_latency, "latency_ms is negative"});
    }
    if (pred.is_failure()) {
        // A failure record carries no output beyond an optional empty answer.
        if (pred.artifact_ref || (pred.answer && !pred.answer->empty())) {
            out.push_back({ViolationKind::conflicting_outputs, "failure record carries an output"});
        }
        return out;
    }
    if (pred.answer && pred.artifact_ref) {
        out.push_back({ViolationKind::conflicting_outputs, "both answer and artifact_ref present"});
    } else if (!pred.answer && !pred.artifact_ref) {
        out.push_back({ViolationKind::missing_output, "neither answer nor artifact_ref present"});
    } else if (produces_artifacts(meta.task_type) != pred.artifact_ref.has_value()) {
        out.push_back({ViolationKind::output_type_mismatch,
                       std::string(pred.artifact_ref ? "artifact_ref" : "answer") + " for " +
                           std::string(to_string(meta.task_type)) + " task"});
    }
    return out;
}

}  // namespace mmeval
