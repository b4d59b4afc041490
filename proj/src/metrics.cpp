#include "mmeval/metrics.hpp"

#include <algorithm>
#include <array>
#include <set>

namespace mmeval {

void to_json(Json& j, const DatasetRecord& v) {
    j = Json{{"question_id", v.question_id},
             {"prompt", v.prompt},
             {"media_refs", v.media_refs},
             {"question_type", to_string(v.question_type)},
             {"metadata", v.metadata}};
    j["options"] = v.options ? Json(*v.options) : Json(nullptr);
    j["ground_truth"] = v.ground_truth ? Json(*v.ground_truth) : Json(nullptr);
}

void from_json(const Json& j, DatasetRecord& v) {
    j.at("question_id").get_to(v.question_id);
    j.at("prompt").get_to(v.prompt);
    v.media_refs = j.value("media_refs", std::vector<std::string>{});
    v.question_type = question_type_from_string(j.at("question_type").get<std::string>());
    if (auto it = j.find("options"); it != j.end() && !it->is_null()) {
        v.options = it->get<std::vector<ChoiceOption>>();
    } else {
        v.options.reset();
    }
    if (auto it = j.find("ground_truth"); it != j.end() && !it->is_null()) {
        v.ground_truth = it->get<std::string>();
    } else {
        v.ground_truth.reset();
    }
    v.metadata = j.value("metadata", Json::object());
}

std::string_view to_string(MetricId id) {
    switch (id) {
        case MetricId::choice_accuracy: return "choice_accuracy";
        case MetricId::exact_match: return "exact_match";
        case MetricId::ocr_containment: return "ocr_containment";
        case MetricId::human_binary: return "human_binary";
    }
    return "exact_match";
}

MetricId metric_id_from_string(std::string_view s) {
    if (s == "choice_accuracy") return MetricId::choice_accuracy;
    if (s == "exact_match") return MetricId::exact_match;
    if (s == "ocr_containment") return MetricId::ocr_containment;
    if (s == "human_binary") return MetricId::human_binary;
    throw EvalError(ErrorCode::INVALID_CONFIG, "unknown metric: " + std::string(s));
}

void MetricSpec::validate() const {
    if (!params.is_object()) throw EvalError(ErrorCode::INVALID_CONFIG, "metric params must be an object");
    for (auto it = params.begin(); it != params.end(); ++it) {
        if (metric_id == MetricId::ocr_containment && it.key() == "mode") continue;
        throw EvalError(ErrorCode::INVALID_CONFIG,
                        "unknown parameter '" + it.key() + "' for metric " + std::string(to_string(metric_id)));
    }
    if (metric_id == MetricId::ocr_containment) containment_mode();
}

ContainmentMode MetricSpec::containment_mode() const {
    auto it = params.find("mode");
    if (it == params.end()) return ContainmentMode::substring;
    if (it->is_string()) {
        if (*it == "substring") return ContainmentMode::substring;
        if (*it == "subsequence") return ContainmentMode::subsequence;
    }
    throw EvalError(ErrorCode::INVALID_CONFIG, "ocr_containment mode must be 'substring' or 'subsequence'");
}

void to_json(Json& j, const MetricSpec& v) {
    j = Json{{"metric_id", to_string(v.metric_id)}, {"params", v.params}};
}

void from_json(const Json& j, MetricSpec& v) {
    if (j.is_string()) {
        v.metric_id = metric_id_from_string(j.get<std::string>());
        v.params = Json::object();
    } else {
        v.metric_id = metric_id_from_string(j.at("metric_id").get<std::string>());
        v.params = j.value("params", Json::object());
    }
}

void to_json(Json& j, const MetricResult& v) {
    j = Json{{"metric_id", to_string(v.metric_id)}, {"value", v.value}, {"per_sample", v.per_sample}};
}

void from_json(const Json& j, MetricResult& v) {
    v.metric_id = metric_id_from_string(j.at("metric_id").get<std::string>());
    j.at("value").get_to(v.value);
    j.at("per_sample").get_to(v.per_sample);
}

void to_json(Json& j, const HumanJudgment& v) {
    j = Json{{"question_id", v.question_id}, {"correct", v.correct}};
}

void from_json(const Json& j, HumanJudgment& v) {
    j.at("question_id").get_to(v.question_id);
    j.at("correct").get_to(v.correct);
}

namespace {

// Decodes one UTF-8 code point at s[i]; invalid bytes decode as themselves.
char32_t next_code_point(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    int len = b0 < 0x80 ? 1 : (b0 >> 5) == 0x6 ? 2 : (b0 >> 4) == 0xe ? 3 : (b0 >> 3) == 0x1e ? 4 : 1;
    if (i + len > s.size()) len = 1;
    char32_t cp = len == 1 ? b0 : len == 2 ? (b0 & 0x1f) : len == 3 ? (b0 & 0x0f) : (b0 & 0x07);
    for (int k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xc0) != 0x80) {
            len = 1;
            cp = b0;
            break;
        }
        cp = (cp << 6) | (b & 0x3f);
    }
    i += len;
    return cp;
}

bool is_space(char32_t cp) {
    switch (cp) {
        case U' ': case U'\t': case U'\n': case U'\v': case U'\f': case U'\r':
        case 0x85: case 0xa0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202f: case 0x205f: case 0x3000:
            return true;
        default:
            return cp >= 0x2000 && cp <= 0x200a;
    }
}

constexpr std::array<std::string_view, 9> kTrailingPunct{".", ",", "!", "?", "\xef\xbc\x9b" /*；*/,
                                                          "\xe3\x80\x82" /*。*/, "\xef\xbc\x81" /*！*/,
                                                          "\xef\xbc\x9f" /*？*/, "\xef\xbc\x8c" /*，*/};

char ascii_lower(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool iequals_at(std::string_view s, std::size_t pos, std::string_view word) {
    if (pos + word.size() > s.size()) return false;
    for (std::size_t k = 0; k < word.size(); ++k) {
        if (ascii_lower(s[pos + k]) != ascii_lower(word[k])) return false;
    }
    return true;
}

bool is_terminator(char c) {
    return c == '.' || c == ',' || c == ':' || c == ';' || c == '!' || c == '?' || c == ')' || c == ']';
}

bool is_ascii_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; }

// Matches a choice label token at s[pos]: "(X)", X followed by end or
// punctuation (case-insensitive), or X followed by whitespace (exact case).
std::optional<std::string> label_at(std::string_view s, std::size_t pos, std::span<const ChoiceOption> options) {
    std::optional<std::string> best;
    for (const auto& opt : options) {
        const auto& label = opt.label;
        if (label.empty()) continue;
        bool hit = false;
        if (pos < s.size() && s[pos] == '(') {
            hit = iequals_at(s, pos + 1, label) && pos + 1 + label.size() < s.size() &&
                  s[pos + 1 + label.size()] == ')';
        } else if (iequals_at(s, pos, label)) {
            const std::size_t end = pos + label.size();
            if (end == s.size() || is_terminator(s[end])) {
                hit = true;
            } else if (is_ascii_space(s[end]) && s.compare(pos, label.size(), label) == 0) {
                hit = true;
            }
        }
        if (hit && (!best || label.size() > best->size())) best = label;
    }
    return best;
}

std::optional<std::string> after_answer_phrase(std::string_view s, std::span<const ChoiceOption> options) {
    for (std::size_t pos = 0; pos < s.size(); ++pos) {
        if (!iequals_at(s, pos, "answer")) continue;
        std::size_t p = pos + 6;
        auto skip_spaces = [&] {
            while (p < s.size() && is_ascii_space(s[p])) ++p;
        };
        skip_spaces();
        bool linked = false;
        if (iequals_at(s, p, "is")) {
            p += 2;
            linked = true;
            skip_spaces();
        }
        if (p < s.size() && s[p] == ':') {
            ++p;
            linked = true;
            skip_spaces();
        }
        if (!linked) continue;
        if (auto label = label_at(s, p, options)) return label;
    }
    return std::nullopt;
}

std::optional<std::string> unique_parenthesized(std::string_view s, std::span<const ChoiceOption> options) {
    std::set<std::string> found;
    for (std::size_t pos = 0; pos < s.size(); ++pos) {
        if (s[pos] != '(') continue;
        if (auto label = label_at(s, pos, options)) found.insert(*label);
    }
    if (found.size() == 1) return *found.begin();
    return std::nullopt;
}

std::optional<std::string> leading_label(std::string_view s, std::span<const ChoiceOption> options) {
    std::size_t p = 0;
    while (p < s.size() && is_ascii_space(s[p])) ++p;
    if (p < s.size() && s[p] == '(') return std::nullopt;  // handled by the parenthesized rule
    return label_at(s, p, options);
}

std::string strip_spaces(std::string s) {
    std::erase(s, ' ');
    return s;
}

bool contains_subsequence(std::string_view needle, std::string_view haystack) {
    std::size_t h = 0;
    std::size_t n = 0;
    while (n < needle.size()) {
        const char32_t want = next_code_point(needle, n);
        bool found = false;
        while (h < haystack.size()) {
            if (next_code_point(haystack, h) == want) {
                found = true;
                break;
            }
        }
        if (!found) return false;
    }
    return true;
}

const std::string* answer_text(const PredictionMap& predictions, const std::string& question_id) {
    auto it = predictions.find(question_id);
    if (it == predictions.end() || it->second.is_failure() || !it->second.answer) return nullptr;
    return &*it->second.answer;
}

const std::string& require_ground_truth(const DatasetRecord& record) {
    if (!record.ground_truth) {
        throw EvalError(ErrorCode::INVALID_CONFIG, "record " + record.question_id + " has no ground truth");
    }
    return *record.ground_truth;
}

template <typename Grade>
MetricResult grade_all(MetricId id, std::span<const DatasetRecord> records, Grade&& grade) {
    MetricResult result;
    result.metric_id = id;
    std::size_t correct = 0;
    for (const auto& record : records) {
        const bool ok = grade(record);
        result.per_sample[record.question_id] = ok;
        correct += ok ? 1 : 0;
    }
    result.value = records.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(records.size());
    return result;
}

}  // namespace

std::string normalize_text(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (std::size_t i = 0; i < s.size();) {
        const std::size_t start = i;
        const char32_t cp = next_code_point(s, i);
        if (is_space(cp)) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) out.push_back(' ');
        pending_space = false;
        for (std::size_t k = start; k < i; ++k) out.push_back(ascii_lower(s[k]));
    }
    for (bool changed = true; changed && !out.empty();) {
        changed = false;
        if (out.back() == ' ') {
            out.pop_back();
            changed = true;
            continue;
        }
        for (auto punct : kTrailingPunct) {
            if (out.ends_with(punct)) {
                out.resize(out.size() - punct.size());
                changed = true;
                break;
            }
        }
    }
    return out;
}

std::optional<std::string> extract_choice(std::string_view response, std::span<const ChoiceOption> options) {
    const std::string norm = normalize_text(response);
    for (const auto& opt : options) {
        if (!opt.label.empty() && norm == normalize_text(opt.label)) return opt.label;
    }
    if (auto label = after_answer_phrase(response, options)) return label;
    if (auto label = unique_parenthesized(response, options)) return label;
    if (auto label = leading_label(response, options)) return label;

    std::optional<std::string> match;
    for (const auto& opt : options) {
        const std::string text = normalize_text(opt.text);
        if (text.empty() || norm.find(text) == std::string::npos) continue;
        if (match) return std::nullopt;
        match = opt.label;
    }
    return match;
}

bool ocr_containment(std::string_view answer, std::string_view response, ContainmentMode mode) {
    const std::string a = strip_spaces(normalize_text(answer));
    const std::string r = strip_spaces(normalize_text(response));
    if (mode == ContainmentMode::substring) return r.find(a) != std::string::npos;
    return contains_subsequence(a, r);
}

bool exact_match(std::string_view answer, std::string_view response) {
    return normalize_text(answer) == normalize_text(response);
}

MetricResult choice_accuracy(const PredictionMap& predictions, std::span<const DatasetRecord> records) {
    for (const auto& record : records) {
        if (!record.options || record.options->empty()) {
            throw EvalError(ErrorCode::INVALID_CONFIG,
                            "choice_accuracy: record " + record.question_id + " has no options");
        }
        require_ground_truth(record);
    }
    return grade_all(MetricId::choice_accuracy, records, [&](const DatasetRecord& record) {
        const std::string* answer = answer_text(predictions, record.question_id);
        if (!answer) return false;
        auto label = extract_choice(*answer, *record.options);
        return label && *label == *record.ground_truth;
    });
}

MetricResult exact_match_accuracy(const PredictionMap& predictions, std::span<const DatasetRecord> records) {
    for (const auto& record : records) require_ground_truth(record);
    return grade_all(MetricId::exact_match, records, [&](const DatasetRecord& record) {
        const std::string* answer = answer_text(predictions, record.question_id);
        return answer && exact_match(*record.ground_truth, *answer);
    });
}

MetricResult ocr_accuracy(const PredictionMap& predictions, std::span<const DatasetRecord> records,
                          ContainmentMode mode) {
    for (const auto& record : records) require_ground_truth(record);
    return grade_all(MetricId::ocr_containment, records, [&](const DatasetRecord& record) {
        const std::string* answer = answer_text(predictions, record.question_id);
        return answer && ocr_containment(*record.ground_truth, *answer, mode);
    });
}

MetricResult human_binary(std::span<const HumanJudgment> scores, std::span<const DatasetRecord> records) {
    std::map<std::string, int> by_question;
    for (const auto& s : scores) {
        if (s.correct != 0 && s.correct != 1) {
            throw EvalError(ErrorCode::INVALID_SCORE, "human score for " + s.question_id + " must be 0 or 1");
        }
        if (!by_question.emplace(s.question_id, s.correct).second) {
            throw EvalError(ErrorCode::INVALID_SCORE, "duplicate human score for " + s.question_id);
        }
    }
    return grade_all(MetricId::human_binary, records, [&](const DatasetRecord& record) {
        auto it = by_question.find(record.question_id);
        return it != by_question.end() && it->second == 1;
    });
}

MetricResult evaluate_metric(const MetricSpec& spec, const PredictionMap& predictions,
                             std::span<const DatasetRecord> records,
                             std::span<const HumanJudgment> human_scores) {
    switch (spec.metric_id) {
        case MetricId::choice_accuracy: return choice_accuracy(predictions, records);
        case MetricId::exact_match: return exact_match_accuracy(predictions, records);
        case MetricId::ocr_containment: return ocr_accuracy(predictions, records, spec.containment_mode());
        case MetricId::human_binary: return human_binary(human_scores, records);
    }
    throw EvalError(ErrorCode::INVALID_CONFIG, "unsupported metric");
}

}  // namespace mmeval
