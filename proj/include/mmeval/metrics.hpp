#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmeval/dataset_record.hpp"
#include "mmeval/protocol.hpp"

namespace mmeval {

enum class MetricId { choice_accuracy, exact_match, ocr_containment, human_binary };

std::string_view to_string(MetricId id);
MetricId metric_id_from_string(std::string_view s);

enum class ContainmentMode { substring, subsequence };

struct MetricSpec {
    MetricId metric_id = MetricId::exact_match;
    Json params = Json::object();

    // Throws INVALID_CONFIG when params do not fit the metric.
    void validate() const;
    ContainmentMode containment_mode() const;
    bool operator==(const MetricSpec&) const = default;
};

// Accepts either a bare metric id string or {"metric_id": ..., "params": {...}}.
void to_json(Json& j, const MetricSpec& v);
void from_json(const Json& j, MetricSpec& v);

struct MetricResult {
    MetricId metric_id = MetricId::exact_match;
    double value = 0.0;
    std::map<std::string, bool> per_sample;
    bool operator==(const MetricResult&) const = default;
};

void to_json(Json& j, const MetricResult& v);
void from_json(const Json& j, MetricResult& v);

// question_id -> prediction; failure records count as missing.
using PredictionMap = std::map<std::string, PredictionRecord>;

struct HumanJudgment {
    std::string question_id;
    int correct = 0;
};

void to_json(Json& j, const HumanJudgment& v);
void from_json(const Json& j, HumanJudgment& v);

std::string normalize_text(std::string_view s);

// Precedence: (1) the whole response is a label; (2) an explicit pattern
// such as "answer is X", "(X)" or a leading "X." / "X)" / "X:"; (3) exactly
// one option's text occurs in the response.
std::optional<std::string> extract_choice(std::string_view response, std::span<const ChoiceOption> options);

bool ocr_containment(std::string_view answer, std::string_view response,
                     ContainmentMode mode = ContainmentMode::substring);

bool exact_match(std::string_view answer, std::string_view response);

MetricResult choice_accuracy(const PredictionMap& predictions, std::span<const DatasetRecord> records);
MetricResult exact_match_accuracy(const PredictionMap& predictions, std::span<const DatasetRecord> records);
MetricResult ocr_accuracy(const PredictionMap& predictions, std::span<const DatasetRecord> records,
                          ContainmentMode mode);
MetricResult human_binary(std::span<const HumanJudgment> scores, std::span<const DatasetRecord> records);

MetricResult evaluate_metric(const MetricSpec& spec, const PredictionMap& predictions,
                             std::span<const DatasetRecord> records,
                             std::span<const HumanJudgment> human_scores);

}  // namespace mmeval
