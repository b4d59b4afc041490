#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mmeval/protocol.hpp"

namespace mmeval {

// One line of a standardized dataset file. Ground truth stays server-side.
struct DatasetRecord {
    std::string question_id;
    std::string prompt;
    std::vector<std::string> media_refs;
    QuestionType question_type = QuestionType::open_ended;
    std::optional<std::vector<ChoiceOption>> options;
    std::optional<std::string> ground_truth;
    Json metadata = Json::object();

    bool operator==(const DatasetRecord&) const = default;
};

void to_json(Json& j, const DatasetRecord& v);
void from_json(const Json& j, DatasetRecord& v);

}  // namespace mmeval
