#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mmeval/canonical.hpp"
#include "mmeval/error.hpp"

namespace mmeval {

inline constexpr int kProtocolVersion = 1;

enum class TaskType { VQA, T2I, T2V, RETRIEVAL };
enum class QuestionType { multiple_choice, open_ended, generation };

std::string_view to_string(TaskType t);
std::string_view to_string(QuestionType q);
TaskType task_type_from_string(std::string_view s);
QuestionType question_type_from_string(std::string_view s);

// T2I / T2V tasks produce media artifacts; the rest produce text answers.
constexpr bool produces_artifacts(TaskType t) { return t == TaskType::T2I || t == TaskType::T2V; }

struct ChoiceOption {
    std::string label;
    std::string text;
    bool operator==(const ChoiceOption&) const = default;
};

struct TaskDescriptor {
    std::string task_id;
    TaskType task_type = TaskType::VQA;
    std::string display_name;
    int protocol_version = kProtocolVersion;
    bool operator==(const TaskDescriptor&) const = default;
};

struct TaskMeta {
    std::string task_id;
    std::uint64_t num_samples = 0;
    TaskType task_type = TaskType::VQA;
    std::string output_dir;
    std::string prompt_template;
    std::vector<std::string> metric_specs;
    int protocol_version = kProtocolVersion;
    bool operator==(const TaskMeta&) const = default;
};

struct SampleInfo {
    std::string question_id;
    std::string prompt;
    std::vector<std::string> media_refs;
    QuestionType question_type = QuestionType::open_ended;
    std::optional<std::vector<ChoiceOption>> options;
    std::uint64_t index = 0;
    bool operator==(const SampleInfo&) const = default;
};

struct PredictionRecord {
    std::string task_id;
    std::string question_id;
    std::string model_id;
    std::optional<std::string> answer;
    std::optional<std::string> artifact_ref;
    std::optional<std::string> raw_response;
    std::optional<double> latency_ms;
    bool from_cache = false;
    // Set on terminal inference failure; such records score as missing.
    std::optional<std::string> error;

    bool is_failure() const { return error.has_value(); }
    // Same scored content (answer, artifact, failure); ignores timing and cache provenance.
    bool same_outcome(const PredictionRecord& other) const;
    bool operator==(const PredictionRecord&) const = default;
};

struct ErrorEnvelope {
    ErrorCode code = ErrorCode::MALFORMED_PAYLOAD;
    std::string message;
    bool operator==(const ErrorEnvelope&) const = default;
};

void to_json(Json& j, const ChoiceOption& v);
void from_json(const Json& j, ChoiceOption& v);
void to_json(Json& j, const TaskDescriptor& v);
void from_json(const Json& j, TaskDescriptor& v);
void to_json(Json& j, const TaskMeta& v);
void from_json(const Json& j, TaskMeta& v);
void to_json(Json& j, const SampleInfo& v);
void from_json(const Json& j, SampleInfo& v);
void to_json(Json& j, const PredictionRecord& v);
void from_json(const Json& j, PredictionRecord& v);
void to_json(Json& j, const ErrorEnvelope& v);
void from_json(const Json& j, ErrorEnvelope& v);

// Decodes a protocol type, reporting any shape error as MALFORMED_PAYLOAD.
template <typename T>
T decode(const Json& j) {
    try {
        return j.get<T>();
    } catch (const Json::exception& e) {
        throw EvalError(ErrorCode::MALFORMED_PAYLOAD, e.what());
    }
}

template <typename T>
T decode(std::string_view text) {
    return decode<T>(parse_json(text));
}

template <typename T>
std::string encode(const T& value) {
    return canonicalize(Json(value));
}

enum class ViolationKind {
    index_out_of_range,
    empty_question_id,
    missing_options,
    duplicate_option_label,
    empty_option_label,
    unexpected_options,
    question_type_mismatch,
    task_mismatch,
    missing_output,
    conflicting_outputs,
    output_type_mismatch,
    unknown_question,
    empty_model_id,
    negative_latency,
};

struct Violation {
    ViolationKind kind;
    std::string detail;
};

ErrorCode error_code_for(ViolationKind kind);

// Every invariant violation of a sample against its task; empty means ok.
std::vector<Violation> validate_sample(const SampleInfo& sample, const TaskMeta& meta);

using QuestionLookup = std::function<bool(const std::string& question_id)>;

std::vector<Violation> validate_prediction(const PredictionRecord& pred, const TaskMeta& meta,
                                           const QuestionLookup& has_question);

}  // namespace mmeval
