#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmeval/metrics.hpp"

namespace mmeval {

struct EvaluationReport {
    std::string task_id;
    std::string model_id;
    std::vector<MetricResult> metrics;  // one per metric spec, in config order
    std::map<std::string, bool> per_sample;  // correctness under the first metric
    std::uint64_t num_samples = 0;
    std::uint64_t num_answered = 0;
    std::uint64_t num_missing = 0;
    std::string created_at;  // UTC, ISO 8601
    // Dataset annotations used when building leaderboards from reports.
    std::optional<std::string> language;
    std::vector<std::string> capabilities;

    const MetricResult& primary() const;
    bool operator==(const EvaluationReport&) const = default;
};

void to_json(Json& j, const EvaluationReport& v);
void from_json(const Json& j, EvaluationReport& v);

// Canonical bytes with created_at blanked; equal iff the scored content is equal.
std::string report_fingerprint(const EvaluationReport& report);

std::string utc_timestamp();

}  // namespace mmeval
