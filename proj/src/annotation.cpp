#include "mmeval/annotation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "mmeval/aggregation.hpp"
#include "mmeval/csv.hpp"
#include "mmeval/error.hpp"
#include "mmeval/hashing.hpp"
#include "mmeval/submission_store.hpp"

namespace fs = std::filesystem;

namespace mmeval {

std::string_view to_string(Dimension d) {
    switch (d) {
        case Dimension::consistency: return "consistency";
        case Dimension::realism: return "realism";
        case Dimension::aesthetics: return "aesthetics";
        case Dimension::safety: return "safety";
    }
    return "consistency";
}

Dimension dimension_from_string(std::string_view s) {
    for (auto d : kDimensionOrder) {
        if (to_string(d) == s) return d;
    }
    throw EvalError(ErrorCode::INVALID_SCORE, "unknown dimension: " + std::string(s));
}

bool valid_score(Dimension d, int value) {
    if (d == Dimension::safety) return value == 0 || value == 1;
    return value >= 1 && value <= 5;
}

const PromptEntry& AnnotationSession::entry(const std::string& prompt_id) const {
    for (const auto& e : entries) {
        if (e.prompt_id == prompt_id) return e;
    }
    throw EvalError(ErrorCode::INVALID_SCORE, "prompt " + prompt_id + " is not part of session " + session_id);
}

void to_json(Json& j, const AnnotationSession& v) {
    Json entries = Json::array();
    for (const auto& e : v.entries) {
        Json slots = Json::array();
        for (const auto& s : e.slots) {
            slots.push_back({{"position", s.position}, {"model_id", s.model_id}, {"artifact_ref", s.artifact_ref}});
        }
        entries.push_back({{"prompt_id", e.prompt_id}, {"text", e.text}, {"slots", slots}});
    }
    Json dims = Json::array();
    for (auto d : v.dimensions) dims.push_back(to_string(d));
    j = Json{{"session_id", v.session_id}, {"entries", entries},       {"dimensions", dims},
             {"annotator_ids", v.annotator_ids}, {"num_rounds", v.num_rounds}, {"seed", v.seed},
             {"gated", v.gated},            {"closed", v.closed}};
}

void from_json(const Json& j, AnnotationSession& v) {
    j.at("session_id").get_to(v.session_id);
    v.entries.clear();
    for (const auto& e : j.at("entries")) {
        PromptEntry entry;
        e.at("prompt_id").get_to(entry.prompt_id);
        e.at("text").get_to(entry.text);
        for (const auto& s : e.at("slots")) {
            entry.slots.push_back(
                {s.at("position").get<int>(), s.at("model_id").get<std::string>(), s.at("artifact_ref").get<std::string>()});
        }
        v.entries.push_back(std::move(entry));
    }
    v.dimensions.clear();
    for (const auto& d : j.at("dimensions")) v.dimensions.push_back(dimension_from_string(d.get<std::string>()));
    j.at("annotator_ids").get_to(v.annotator_ids);
    j.at("num_rounds").get_to(v.num_rounds);
    j.at("seed").get_to(v.seed);
    v.gated = j.value("gated", true);
    v.closed = j.value("closed", false);
}

namespace {

// SplitMix64: fixed output sequence on every platform, unlike std::shuffle.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, bound) by rejection.
    std::uint64_t below(std::uint64_t bound) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return x % bound;
    }

private:
    std::uint64_t state_;
};

template <typename T>
void fisher_yates(std::vector<T>& items, SplitMix64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.below(i));
        std::swap(items[i - 1], items[j]);
    }
}

}  // namespace

AnnotationSession make_session_layout(const SessionRequest& request) {
    auto invalid = [](const std::string& m) { throw EvalError(ErrorCode::INVALID_CONFIG, m); };
    std::set<std::string> annotators(request.annotators.begin(), request.annotators.end());
    if (request.annotators.size() != kAnnotatorsPerSession || annotators.size() != kAnnotatorsPerSession) {
        invalid("a session needs exactly 3 distinct annotators, got " + std::to_string(annotators.size()));
    }
    if (request.prompts.empty()) invalid("a session needs at least one prompt");
    if (request.model_outputs.empty()) invalid("a session needs at least one model");

    std::set<std::string> prompt_ids;
    for (const auto& p : request.prompts) {
        if (!prompt_ids.insert(p.prompt_id).second) invalid("duplicate prompt_id " + p.prompt_id);
    }
    for (const auto& p : request.prompts) {
        for (const auto& [model, outputs] : request.model_outputs) {
            auto it = outputs.find(p.prompt_id);
            if (it == outputs.end() || it->second.empty()) {
                invalid("model " + model + " has no artifact for prompt " + p.prompt_id);
            }
        }
    }

    SplitMix64 rng(request.seed);
    AnnotationSession session;
    session.seed = request.seed;
    session.gated = request.gated;
    session.annotator_ids = request.annotators;

    std::vector<std::size_t> prompt_order(request.prompts.size());
    for (std::size_t i = 0; i < prompt_order.size(); ++i) prompt_order[i] = i;
    fisher_yates(prompt_order, rng);

    for (std::size_t idx : prompt_order) {
        const auto& p = request.prompts[idx];
        std::vector<std::string> models;
        for (const auto& [model, outputs] : request.model_outputs) models.push_back(model);  // sorted by map
        fisher_yates(models, rng);
        PromptEntry entry{p.prompt_id, p.text, {}};
        for (std::size_t pos = 0; pos < models.size(); ++pos) {
            entry.slots.push_back(
                {static_cast<int>(pos), models[pos], request.model_outputs.at(models[pos]).at(p.prompt_id)});
        }
        session.entries.push_back(std::move(entry));
    }
    return session;
}

void from_json(const Json& j, ScoreInput& v) {
    j.at("session_id").get_to(v.session_id);
    j.at("annotator_id").get_to(v.annotator_id);
    j.at("round").get_to(v.round);
    j.at("prompt_id").get_to(v.prompt_id);
    j.at("slot").get_to(v.slot);
    v.dimension = dimension_from_string(j.at("dimension").get<std::string>());
    j.at("value").get_to(v.value);
}

void to_json(Json& j, const AnnotationScore& v) {
    j = Json{{"session_id", v.session_id}, {"annotator_id", v.annotator_id}, {"round", v.round},
             {"prompt_id", v.prompt_id},   {"model_id", v.model_id},         {"dimension", to_string(v.dimension)},
             {"value", v.value}};
}

void from_json(const Json& j, AnnotationScore& v) {
    j.at("session_id").get_to(v.session_id);
    j.at("annotator_id").get_to(v.annotator_id);
    j.at("round").get_to(v.round);
    j.at("prompt_id").get_to(v.prompt_id);
    j.at("model_id").get_to(v.model_id);
    v.dimension = dimension_from_string(j.at("dimension").get<std::string>());
    j.at("value").get_to(v.value);
}

AnnotationReport summarize_scores(const std::string& session_id, const std::vector<AnnotationScore>& scores) {
    AnnotationReport report;
    report.session_id = session_id;
    report.num_scores = scores.size();

    std::map<std::string, std::map<Dimension, std::pair<double, std::size_t>>> sums;
    // (annotator, prompt, model, dimension) -> round -> value
    std::map<std::tuple<std::string, std::string, std::string, Dimension>, std::map<int, int>> by_item;
    for (const auto& s : scores) {
        auto& [sum, n] = sums[s.model_id][s.dimension];
        sum += s.value;
        ++n;
        by_item[{s.annotator_id, s.prompt_id, s.model_id, s.dimension}][s.round] = s.value;
    }
    for (const auto& [model, dims] : sums) {
        for (const auto& [dim, sn] : dims) {
            DimensionSummary summary;
            summary.count = sn.second;
            summary.mean = sn.first / static_cast<double>(sn.second);
            summary.normalized = dim == Dimension::safety ? summary.mean * 100.0 : normalize_five_point(summary.mean);
            report.models[model][dim] = summary;
        }
    }

    std::map<Dimension, std::pair<double, std::size_t>> diff;
    std::map<std::string, std::map<Dimension, std::pair<double, std::size_t>>> diff_by_annotator;
    for (const auto& [key, rounds] : by_item) {
        const auto& annotator = std::get<0>(key);
        const Dimension dim = std::get<3>(key);
        for (auto a = rounds.begin(); a != rounds.end(); ++a) {
            for (auto b = std::next(a); b != rounds.end(); ++b) {
                const double d = std::abs(a->second - b->second);
                diff[dim].first += d;
                ++diff[dim].second;
                diff_by_annotator[annotator][dim].first += d;
                ++diff_by_annotator[annotator][dim].second;
            }
        }
    }
    for (const auto& [dim, dn] : diff) report.stability[dim] = dn.first / static_cast<double>(dn.second);
    for (const auto& [annotator, dims] : diff_by_annotator) {
        for (const auto& [dim, dn] : dims) {
            report.stability_by_annotator[annotator][dim] = dn.first / static_cast<double>(dn.second);
        }
    }
    return report;
}

Json report_json(const AnnotationReport& report) {
    Json models = Json::object();
    for (const auto& [model, dims] : report.models) {
        Json m = Json::object();
        for (const auto& [dim, s] : dims) {
            m[std::string(to_string(dim))] = {{"mean", s.mean}, {"normalized", s.normalized}, {"count", s.count}};
        }
        models[model] = m;
    }
    Json stability = Json::object();
    for (const auto& [dim, v] : report.stability) stability[std::string(to_string(dim))] = v;
    Json by_annotator = Json::object();
    for (const auto& [annotator, dims] : report.stability_by_annotator) {
        Json a = Json::object();
        for (const auto& [dim, v] : dims) a[std::string(to_string(dim))] = v;
        by_annotator[annotator] = a;
    }
    return Json{{"session_id", report.session_id},
                {"num_scores", report.num_scores},
                {"models", models},
                {"stability", stability},
                {"stability_by_annotator", by_annotator}};
}

AnnotationBook::AnnotationBook(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
    load();
}

void AnnotationBook::persist_session(const AnnotationSession& session) const {
    write_file_atomic(dir_ / (session.session_id + ".session.json"), canonicalize(Json(session)));
}

void AnnotationBook::load() {
    for (const auto& entry : fs::directory_iterator(dir_)) {
        const std::string name = entry.path().filename().string();
        if (!name.ends_with(".session.json")) continue;
        State state;
        state.session = parse_json(read_file(entry.path())).get<AnnotationSession>();
        const fs::path log = dir_ / (state.session.session_id + ".scores.jsonl");
        if (fs::exists(log)) {
            const std::string text = read_file(log);
            std::size_t start = 0;
            while (start < text.size()) {
                const auto end = text.find('\n', start);
                if (end == std::string::npos) break;
                const std::string_view line(text.data() + start, end - start);
                start = end + 1;
                if (line.empty()) continue;
                auto score = parse_json(line).get<AnnotationScore>();
                state.scores[{score.annotator_id, score.round, score.prompt_id, score.model_id, score.dimension}] = score;
            }
        }
        sessions_.emplace(state.session.session_id, std::move(state));
    }
}

AnnotationSession AnnotationBook::create(const SessionRequest& request) {
    AnnotationSession session = make_session_layout(request);
    const std::string base = "ann-" + sha256_hex(canonicalize(Json(session))).substr(0, 12);
    std::lock_guard lock(mutex_);
    session.session_id = base;
    for (int n = 2; sessions_.contains(session.session_id); ++n) session.session_id = base + "-" + std::to_string(n);
    persist_session(session);
    sessions_[session.session_id] = State{session, {}};
    return session;
}

AnnotationBook::State& AnnotationBook::find(const std::string& session_id) {
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw EvalError(ErrorCode::UNKNOWN_SESSION, "unknown session " + session_id);
    return it->second;
}

const AnnotationBook::State& AnnotationBook::find(const std::string& session_id) const {
    auto it = sessions_.find(session_id);
    if (it == sessions_.end()) throw EvalError(ErrorCode::UNKNOWN_SESSION, "unknown session " + session_id);
    return it->second;
}

AnnotationSession AnnotationBook::session(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    return find(session_id).session;
}

void AnnotationBook::check_order(const State& state, const AnnotationScore& score) const {
    const auto& s = state.session;
    auto complete = [&](int round, Dimension dim) {
        for (const auto& e : s.entries) {
            for (const auto& slot : e.slots) {
                if (!state.scores.contains({score.annotator_id, round, e.prompt_id, slot.model_id, dim})) return false;
            }
        }
        return true;
    };
    for (int r = 1; r < score.round; ++r) {
        for (auto d : s.dimensions) {
            if (!complete(r, d)) {
                throw EvalError(ErrorCode::ORDER_VIOLATION,
                                "round " + std::to_string(r) + " is not complete for " + score.annotator_id);
            }
        }
    }
    for (auto d : s.dimensions) {
        if (d == score.dimension) break;
        if (!complete(score.round, d)) {
            throw EvalError(ErrorCode::ORDER_VIOLATION, std::string(to_string(d)) + " is not complete in round " +
                                                            std::to_string(score.round) + " for " + score.annotator_id);
        }
    }
}

AnnotationScore AnnotationBook::record(const ScoreInput& input) {
    std::lock_guard lock(mutex_);
    State& state = find(input.session_id);
    const auto& s = state.session;
    if (s.closed) throw EvalError(ErrorCode::SESSION_CLOSED, "session " + s.session_id + " is closed");
    if (std::find(s.annotator_ids.begin(), s.annotator_ids.end(), input.annotator_id) == s.annotator_ids.end()) {
        throw EvalError(ErrorCode::INVALID_SCORE, "annotator " + input.annotator_id + " is not assigned to the session");
    }
    if (input.round < 1 || input.round > s.num_rounds) {
        throw EvalError(ErrorCode::INVALID_SCORE,
                        "round " + std::to_string(input.round) + " outside 1.." + std::to_string(s.num_rounds));
    }
    if (!valid_score(input.dimension, input.value)) {
        throw EvalError(ErrorCode::INVALID_SCORE, std::string(to_string(input.dimension)) + " value " +
                                                      std::to_string(input.value) + " is out of range");
    }
    const PromptEntry& entry = s.entry(input.prompt_id);
    if (input.slot < 0 || static_cast<std::size_t>(input.slot) >= entry.slots.size()) {
        throw EvalError(ErrorCode::INVALID_SCORE, "slot " + std::to_string(input.slot) + " does not exist");
    }
    AnnotationScore score{s.session_id, input.annotator_id, input.round, input.prompt_id,
                          entry.slots[static_cast<std::size_t>(input.slot)].model_id, input.dimension, input.value};
    if (s.gated) check_order(state, score);

    std::ofstream log(dir_ / (s.session_id + ".scores.jsonl"), std::ios::app | std::ios::binary);
    log << canonicalize(Json(score)) << '\n';
    if (!log.flush()) throw std::runtime_error("cannot append annotation score");
    state.scores[{score.annotator_id, score.round, score.prompt_id, score.model_id, score.dimension}] = score;
    return score;
}

void AnnotationBook::close(const std::string& session_id) {
    std::lock_guard lock(mutex_);
    State& state = find(session_id);
    state.session.closed = true;
    persist_session(state.session);
}

std::vector<AnnotationScore> AnnotationBook::scores(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    std::vector<AnnotationScore> out;
    for (const auto& [key, score] : find(session_id).scores) out.push_back(score);
    return out;
}

AnnotationReport AnnotationBook::report(const std::string& session_id) const {
    std::vector<AnnotationScore> all;
    {
        std::lock_guard lock(mutex_);
        const State& state = find(session_id);
        if (!state.session.closed) {
            throw EvalError(ErrorCode::SESSION_NOT_CLOSED, "session " + session_id + " is still open");
        }
        for (const auto& [key, score] : state.scores) all.push_back(score);
    }
    if (all.empty()) throw EvalError(ErrorCode::NO_SUBMISSIONS, "session " + session_id + " has no scores");
    return summarize_scores(session_id, all);
}

Json AnnotationBook::blind_view(const std::string& session_id, const std::optional<std::string>& annotator) const {
    std::lock_guard lock(mutex_);
    const State& state = find(session_id);
    const auto& s = state.session;
    Json prompts = Json::array();
    for (const auto& e : s.entries) {
        Json slots = Json::array();
        for (const auto& slot : e.slots) slots.push_back({{"position", slot.position}});
        prompts.push_back({{"prompt_id", e.prompt_id}, {"text", e.text}, {"slots", slots}});
    }
    Json dims = Json::array();
    for (auto d : s.dimensions) dims.push_back(to_string(d));
    Json view{{"session_id", s.session_id}, {"prompts", prompts}, {"dimensions", dims},
              {"num_rounds", s.num_rounds}, {"annotator_ids", s.annotator_ids}, {"closed", s.closed},
              {"gated", s.gated}};
    if (annotator) {
        Json scored = Json::array();
        for (const auto& [key, score] : state.scores) {
            if (score.annotator_id != *annotator) continue;
            const auto& e = s.entry(score.prompt_id);
            int position = 0;
            for (const auto& slot : e.slots) {
                if (slot.model_id == score.model_id) position = slot.position;
            }
            scored.push_back({{"round", score.round},
                              {"dimension", to_string(score.dimension)},
                              {"prompt_id", score.prompt_id},
                              {"slot", position},
                              {"value", score.value}});
        }
        view["scored"] = scored;
    }
    return view;
}

}  // namespace mmeval
