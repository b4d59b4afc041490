#pragma once

#include <array>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mmeval {

enum class Language { EN, ZH };
enum class Capability { Gen, Math, Chart, Vis, Text };

inline constexpr std::array<Capability, 5> kAllCapabilities{Capability::Gen, Capability::Math, Capability::Chart,
                                                            Capability::Vis, Capability::Text};

std::string_view to_string(Language l);
std::string_view to_string(Capability c);
Language language_from_string(std::string_view s);
Capability capability_from_string(std::string_view s);

struct DatasetAnnotation {
    Language language = Language::EN;
    std::set<Capability> capabilities;
};

// Model x dataset score grid on the 0-100 scale. Cells may be absent.
class ScoreTable {
public:
    void annotate(const std::string& dataset, DatasetAnnotation annotation);
    void add_model(const std::string& model);
    // Throws std::out_of_range when score is outside [0, 100].
    void set(const std::string& model, const std::string& dataset, double score);

    std::optional<double> get(const std::string& model, const std::string& dataset) const;
    const std::set<std::string>& models() const { return models_; }
    const std::set<std::string>& datasets() const { return datasets_; }
    const DatasetAnnotation& annotation(const std::string& dataset) const;

    std::size_t count(Language language) const;

    // Throws std::invalid_argument if any dataset column lacks an annotation.
    void validate() const;

private:
    std::set<std::string> models_;
    std::set<std::string> datasets_;
    std::map<std::string, DatasetAnnotation> annotations_;
    std::map<std::pair<std::string, std::string>, double> cells_;
};

struct LeaderboardRow {
    std::string model_id;
    double overall_avg_rank = 0.0;
    std::optional<double> en_avg_rank;
    std::optional<double> zh_avg_rank;
    std::map<Capability, double> capability_scores;
};

// Unweighted mean over every dataset tagged with `capability`, both languages
// pooled, absent cells skipped. Throws std::invalid_argument when no dataset
// carries the tag; nullopt when the model has no score on any of them.
std::optional<double> capability_score(const ScoreTable& table, const std::string& model, Capability capability);

// Scores for every capability that at least one dataset is tagged with.
std::map<Capability, double> capability_scores(const ScoreTable& table, const std::string& model);

// Descending-score ranks for one dataset column: rank 1 is best, ties share
// the mean of their positions, and models without a score share the last
// positions.
std::map<std::string, double> rank_column(const ScoreTable& table, const std::string& dataset);

double overall_rank(double en_avg_rank, double zh_avg_rank, std::size_t n_en, std::size_t n_zh);

// Rows sorted ascending by overall average rank (ties by model id).
std::vector<LeaderboardRow> average_ranks(const ScoreTable& table);

struct HumanDimensions {
    double consistency = 0.0;
    double realism = 0.0;
    double aesthetics = 0.0;
    double safety = 0.0;

    std::array<double, 4> as_array() const { return {consistency, realism, aesthetics, safety}; }
};

struct HumanWeights {
    std::array<double, 4> values{0.5, 0.2, 0.2, 0.1};

    // Nonnegative and summing to 1 within 1e-9; throws std::invalid_argument.
    void validate() const;
};

// Dot product with the weights, rounded to two decimals.
double weighted_human_score(const HumanDimensions& dims, const HumanWeights& weights = {});

struct WeightFit {
    HumanWeights weights;
    std::vector<double> residuals;  // fitted minus observed, per row
    double max_abs_residual() const;
};

// Least-squares weights under the constraint that they sum to 1. Needs at
// least four linearly independent rows (std::invalid_argument otherwise).
WeightFit fit_weights(std::span<const std::pair<HumanDimensions, double>> rows);

// Product-moment correlation. Throws std::invalid_argument on length mismatch
// or fewer than two points, std::domain_error on zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

// (mean - 1) / 4 * 100 for a mean on the 1-5 scale.
double normalize_five_point(double mean);

double round_to(double value, int decimals);

}  // namespace mmeval
