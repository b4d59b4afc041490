#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmeval/aggregation.hpp"
#include "mmeval/canonical.hpp"
#include "mmeval/csv.hpp"

namespace mmeval {

// The three CSV layouts the leaderboard accepts, told apart by header:
//   scores:          model,dataset,score
//   language_ranks:  model,en_avg_rank,zh_avg_rank
//   human:           model,consistency,realism,aesthetics,safety
enum class LeaderboardInput { scores, language_ranks, human };

LeaderboardInput detect_input(const CsvTable& table);

// Sidecar annotations: dataset,language,capabilities where capabilities are
// separated by ';' or '|' (e.g. "Gen;Vis").
std::map<std::string, DatasetAnnotation> read_annotations(const std::filesystem::path& path);

ScoreTable score_table_from_csv(const CsvTable& table, const std::map<std::string, DatasetAnnotation>& annotations);

// Each report contributes its first metric x 100 under the dataset name
// task_id. Annotations given explicitly override those embedded in reports.
ScoreTable score_table_from_reports(const std::vector<std::filesystem::path>& reports,
                                    const std::map<std::string, DatasetAnnotation>& annotations);

std::vector<std::filesystem::path> expand_glob(const std::string& pattern);

struct LanguageRanks {
    std::string model_id;
    double en_avg_rank = 0.0;
    double zh_avg_rank = 0.0;
};

std::vector<LanguageRanks> language_ranks_from_csv(const CsvTable& table);

// Rows with overall computed from the language averages, sorted by overall.
std::vector<LeaderboardRow> rows_from_language_ranks(const std::vector<LanguageRanks>& ranks, std::size_t n_en,
                                                     std::size_t n_zh);

struct WeightedRow {
    std::string model_id;
    HumanDimensions dims;
    double weighted = 0.0;
};

// Sorted descending by weighted score.
std::vector<WeightedRow> weighted_rows_from_csv(const CsvTable& table, const HumanWeights& weights);

std::string render_rank_csv(const std::vector<LeaderboardRow>& rows);
std::string render_rank_markdown(const std::vector<LeaderboardRow>& rows);
Json rank_rows_json(const std::vector<LeaderboardRow>& rows);

std::string render_weighted_csv(const std::vector<WeightedRow>& rows);
std::string render_weighted_markdown(const std::vector<WeightedRow>& rows);
Json weighted_rows_json(const std::vector<WeightedRow>& rows);

}  // namespace mmeval
