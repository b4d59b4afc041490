#include "mmeval/report.hpp"

#include <ctime>

namespace mmeval {

const MetricResult& EvaluationReport::primary() const {
    if (metrics.empty()) throw EvalError(ErrorCode::MALFORMED_PAYLOAD, "report has no metrics");
    return metrics.front();
}

void to_json(Json& j, const EvaluationReport& v) {
    j = Json{{"task_id", v.task_id},
             {"model_id", v.model_id},
             {"metrics", v.metrics},
             {"per_sample", v.per_sample},
             {"num_samples", v.num_samples},
             {"num_answered", v.num_answered},
             {"num_missing", v.num_missing},
             {"created_at", v.created_at},
             {"capabilities", v.capabilities}};
    j["language"] = v.language ? Json(*v.language) : Json(nullptr);
}

void from_json(const Json& j, EvaluationReport& v) {
    j.at("task_id").get_to(v.task_id);
    j.at("model_id").get_to(v.model_id);
    j.at("metrics").get_to(v.metrics);
    j.at("per_sample").get_to(v.per_sample);
    j.at("num_samples").get_to(v.num_samples);
    j.at("num_answered").get_to(v.num_answered);
    j.at("num_missing").get_to(v.num_missing);
    v.created_at = j.value("created_at", std::string{});
    if (auto it = j.find("language"); it != j.end() && !it->is_null()) {
        v.language = it->get<std::string>();
    } else {
        v.language.reset();
    }
    v.capabilities = j.value("capabilities", std::vector<std::string>{});
}

std::string report_fingerprint(const EvaluationReport& report) {
    EvaluationReport copy = report;
    copy.created_at.clear();
    return canonicalize(Json(copy));
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace mmeval
