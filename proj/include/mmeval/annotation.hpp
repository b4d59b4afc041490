#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "mmeval/canonical.hpp"

namespace mmeval {

enum class Dimension { consistency, realism, aesthetics, safety };

// Fixed scoring order within every session.
inline constexpr std::array<Dimension, 4> kDimensionOrder{Dimension::consistency, Dimension::realism,
                                                          Dimension::aesthetics, Dimension::safety};

inline constexpr int kAnnotatorsPerSession = 3;
inline constexpr int kRoundsPerSession = 3;

std::string_view to_string(Dimension d);
Dimension dimension_from_string(std::string_view s);

// 1..5 for the graded dimensions, 0/1 for safety.
bool valid_score(Dimension d, int value);

struct AnnotationPrompt {
    std::string prompt_id;
    std::string text;
};

struct SessionRequest {
    std::vector<AnnotationPrompt> prompts;
    // model_id -> prompt_id -> artifact_ref
    std::map<std::string, std::map<std::string, std::string>> model_outputs;
    std::vector<std::string> annotators;
    std::uint64_t seed = 0;
    bool gated = true;  // enforce dimension-then-round order per annotator
};

struct DisplaySlot {
    int position = 0;
    std::string model_id;
    std::string artifact_ref;
};

struct PromptEntry {
    std::string prompt_id;
    std::string text;
    std::vector<DisplaySlot> slots;  // in display order, position = index
};

struct AnnotationSession {
    std::string session_id;
    std::vector<PromptEntry> entries;  // in display order
    std::vector<Dimension> dimensions{kDimensionOrder.begin(), kDimensionOrder.end()};
    std::vector<std::string> annotator_ids;
    int num_rounds = kRoundsPerSession;
    std::uint64_t seed = 0;
    bool gated = true;
    bool closed = false;

    const PromptEntry& entry(const std::string& prompt_id) const;
};

void to_json(Json& j, const AnnotationSession& v);
void from_json(const Json& j, AnnotationSession& v);

// Deterministic layout: prompt display order and per-prompt slot order are
// drawn from a SplitMix64 stream seeded with `seed`; models are taken in
// sorted order before shuffling. Throws EvalError(INVALID_CONFIG) naming a
// missing artifact, or when the annotator count is not 3.
AnnotationSession make_session_layout(const SessionRequest& request);

// What the annotator submits: the display slot, never the model.
struct ScoreInput {
    std::string session_id;
    std::string annotator_id;
    int round = 1;
    std::string prompt_id;
    int slot = 0;
    Dimension dimension = Dimension::consistency;
    int value = 0;
};

void from_json(const Json& j, ScoreInput& v);

struct AnnotationScore {
    std::string session_id;
    std::string annotator_id;
    int round = 1;
    std::string prompt_id;
    std::string model_id;
    Dimension dimension = Dimension::consistency;
    int value = 0;
    bool operator==(const AnnotationScore&) const = default;
};

void to_json(Json& j, const AnnotationScore& v);
void from_json(const Json& j, AnnotationScore& v);

struct DimensionSummary {
    double mean = 0.0;        // raw scale
    double normalized = 0.0;  // 0-100
    std::size_t count = 0;
};

struct AnnotationReport {
    std::string session_id;
    std::size_t num_scores = 0;
    std::map<std::string, std::map<Dimension, DimensionSummary>> models;
    // Mean |difference| between rounds of the same annotator on the same item.
    std::map<Dimension, double> stability;
    std::map<std::string, std::map<Dimension, double>> stability_by_annotator;
};

Json report_json(const AnnotationReport& report);

// Computes the report from a score list; pure.
AnnotationReport summarize_scores(const std::string& session_id, const std::vector<AnnotationScore>& scores);

// Sessions and their scores, persisted under `dir`.
class AnnotationBook {
public:
    explicit AnnotationBook(std::filesystem::path dir);

    AnnotationSession create(const SessionRequest& request);
    AnnotationSession session(const std::string& session_id) const;

    // Resolves the slot to a model and stores the score, replacing any
    // earlier value for the same (annotator, round, prompt, model, dimension).
    AnnotationScore record(const ScoreInput& input);

    void close(const std::string& session_id);
    std::vector<AnnotationScore> scores(const std::string& session_id) const;
    AnnotationReport report(const std::string& session_id) const;

    // Session as shown to an annotator: slots without model identity plus
    // the keys this annotator has already scored.
    Json blind_view(const std::string& session_id, const std::optional<std::string>& annotator) const;

private:
    struct State {
        AnnotationSession session;
        std::map<std::tuple<std::string, int, std::string, std::string, Dimension>, AnnotationScore> scores;
    };
    using ScoreKey = std::tuple<std::string, int, std::string, std::string, Dimension>;

    State& find(const std::string& session_id);
    const State& find(const std::string& session_id) const;
    void check_order(const State& state, const AnnotationScore& score) const;
    void load();
    void persist_session(const AnnotationSession& session) const;

    std::filesystem::path dir_;
    mutable std::mutex mutex_;
    std::map<std::string, State> sessions_;
};

}  // namespace mmeval
