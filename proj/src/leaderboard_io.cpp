#include "mmeval/leaderboard_io.hpp"

#include <glob.h>

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "mmeval/report.hpp"

namespace mmeval {

namespace {

double parse_number(const std::string& text, const std::string& what) {
    try {
        std::size_t used = 0;
        double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error("bad number for " + what + ": '" + text + "'");
    }
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

std::string fixed(const std::optional<double>& v, int decimals) { return v ? fixed(*v, decimals) : ""; }

std::set<Capability> parse_capabilities(const std::string& text) {
    std::set<Capability> out;
    std::string token;
    auto flush = [&] {
        token.erase(0, token.find_first_not_of(' '));
        token.erase(token.find_last_not_of(' ') + 1);
        if (!token.empty()) out.insert(capability_from_string(token));
        token.clear();
    };
    for (char c : text) {
        if (c == ';' || c == '|') {
            flush();
        } else {
            token.push_back(c);
        }
    }
    flush();
    return out;
}

}  // namespace

LeaderboardInput detect_input(const CsvTable& table) {
    auto has = [&](std::initializer_list<const char*> cols) {
        return std::all_of(cols.begin(), cols.end(), [&](const char* c) { return table.has_column(c); });
    };
    if (has({"model", "dataset", "score"})) return LeaderboardInput::scores;
    if (has({"model", "en_avg_rank", "zh_avg_rank"})) return LeaderboardInput::language_ranks;
    if (has({"model", "consistency", "realism", "aesthetics", "safety"})) return LeaderboardInput::human;
    throw std::runtime_error("unrecognized leaderboard CSV header");
}

std::map<std::string, DatasetAnnotation> read_annotations(const std::filesystem::path& path) {
    auto table = read_csv_table(path);
    for (const char* col : {"dataset", "language", "capabilities"}) {
        if (!table.has_column(col)) throw std::runtime_error(path.string() + ": missing column " + col);
    }
    std::map<std::string, DatasetAnnotation> out;
    for (const auto& row : table.rows) {
        DatasetAnnotation a;
        a.language = language_from_string(row.at("language"));
        a.capabilities = parse_capabilities(row.at("capabilities"));
        out[row.at("dataset")] = std::move(a);
    }
    return out;
}

ScoreTable score_table_from_csv(const CsvTable& table, const std::map<std::string, DatasetAnnotation>& annotations) {
    ScoreTable scores;
    for (const auto& [dataset, a] : annotations) scores.annotate(dataset, a);
    for (const auto& row : table.rows) {
        const auto& score = row.at("score");
        if (score.empty()) {
            scores.add_model(row.at("model"));
            continue;
        }
        scores.set(row.at("model"), row.at("dataset"), parse_number(score, "score"));
    }
    scores.validate();
    return scores;
}

ScoreTable score_table_from_reports(const std::vector<std::filesystem::path>& reports,
                                    const std::map<std::string, DatasetAnnotation>& annotations) {
    ScoreTable scores;
    for (const auto& path : reports) {
        auto report = decode<EvaluationReport>(parse_json(read_file(path)));
        if (!annotations.contains(report.task_id) && report.language) {
            DatasetAnnotation a;
            a.language = language_from_string(*report.language);
            for (const auto& c : report.capabilities) a.capabilities.insert(capability_from_string(c));
            scores.annotate(report.task_id, std::move(a));
        }
        scores.set(report.model_id, report.task_id, report.primary().value * 100.0);
    }
    for (const auto& [dataset, a] : annotations) scores.annotate(dataset, a);
    scores.validate();
    return scores;
}

std::vector<std::filesystem::path> expand_glob(const std::string& pattern) {
    glob_t g{};
    std::vector<std::filesystem::path> out;
    if (::glob(pattern.c_str(), 0, nullptr, &g) == 0) {
        for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    }
    globfree(&g);
    std::sort(out.begin(), out.end());
    return out;
}

std::vector<LanguageRanks> language_ranks_from_csv(const CsvTable& table) {
    std::vector<LanguageRanks> out;
    for (const auto& row : table.rows) {
        out.push_back({row.at("model"), parse_number(row.at("en_avg_rank"), "en_avg_rank"),
                       parse_number(row.at("zh_avg_rank"), "zh_avg_rank")});
    }
    return out;
}

std::vector<LeaderboardRow> rows_from_language_ranks(const std::vector<LanguageRanks>& ranks, std::size_t n_en,
                                                     std::size_t n_zh) {
    std::vector<LeaderboardRow> rows;
    for (const auto& r : ranks) {
        LeaderboardRow row;
        row.model_id = r.model_id;
        row.en_avg_rank = r.en_avg_rank;
        row.zh_avg_rank = r.zh_avg_rank;
        row.overall_avg_rank = overall_rank(r.en_avg_rank, r.zh_avg_rank, n_en, n_zh);
        rows.push_back(std::move(row));
    }
    std::stable_sort(rows.begin(), rows.end(),
                     [](const auto& a, const auto& b) { return a.overall_avg_rank < b.overall_avg_rank; });
    return rows;
}

std::vector<WeightedRow> weighted_rows_from_csv(const CsvTable& table, const HumanWeights& weights) {
    std::vector<WeightedRow> out;
    for (const auto& row : table.rows) {
        WeightedRow w;
        w.model_id = row.at("model");
        w.dims = {parse_number(row.at("consistency"), "consistency"), parse_number(row.at("realism"), "realism"),
                  parse_number(row.at("aesthetics"), "aesthetics"), parse_number(row.at("safety"), "safety")};
        w.weighted = weighted_human_score(w.dims, weights);
        out.push_back(std::move(w));
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.weighted > b.weighted; });
    return out;
}

std::string render_rank_csv(const std::vector<LeaderboardRow>& rows) {
    std::ostringstream out;
    out << "model,overall,en,zh";
    for (auto c : kAllCapabilities) out << ',' << to_string(c);
    out << '\n';
    for (const auto& r : rows) {
        out << csv_escape(r.model_id) << ',' << fixed(r.overall_avg_rank, 4) << ',' << fixed(r.en_avg_rank, 4) << ','
            << fixed(r.zh_avg_rank, 4);
        for (auto c : kAllCapabilities) {
            auto it = r.capability_scores.find(c);
            out << ',' << (it == r.capability_scores.end() ? "" : fixed(it->second, 2));
        }
        out << '\n';
    }
    return out.str();
}

std::string render_rank_markdown(const std::vector<LeaderboardRow>& rows) {
    std::ostringstream out;
    out << "| Model | Overall | EN | ZH |";
    for (auto c : kAllCapabilities) out << ' ' << to_string(c) << " |";
    out << "\n|---|---:|---:|---:|";
    for (std::size_t i = 0; i < kAllCapabilities.size(); ++i) out << "---:|";
    out << '\n';
    for (const auto& r : rows) {
        out << "| " << r.model_id << " | " << fixed(r.overall_avg_rank, 1) << " | " << fixed(r.en_avg_rank, 1)
            << " | " << fixed(r.zh_avg_rank, 1) << " |";
        for (auto c : kAllCapabilities) {
            auto it = r.capability_scores.find(c);
            out << ' ' << (it == r.capability_scores.end() ? "-" : fixed(it->second, 2)) << " |";
        }
        out << '\n';
    }
    return out.str();
}

Json rank_rows_json(const std::vector<LeaderboardRow>& rows) {
    Json out = Json::array();
    for (const auto& r : rows) {
        Json caps = Json::object();
        for (const auto& [c, v] : r.capability_scores) caps[std::string(to_string(c))] = v;
        out.push_back({{"model", r.model_id},
                       {"overall_avg_rank", r.overall_avg_rank},
                       {"en_avg_rank", r.en_avg_rank ? Json(*r.en_avg_rank) : Json(nullptr)},
                       {"zh_avg_rank", r.zh_avg_rank ? Json(*r.zh_avg_rank) : Json(nullptr)},
                       {"capability_scores", caps}});
    }
    return out;
}

std::string render_weighted_csv(const std::vector<WeightedRow>& rows) {
    std::ostringstream out;
    out << "model,weighted,consistency,realism,aesthetics,safety\n";
    for (const auto& r : rows) {
        out << csv_escape(r.model_id) << ',' << fixed(r.weighted, 2) << ',' << fixed(r.dims.consistency, 2) << ','
            << fixed(r.dims.realism, 2) << ',' << fixed(r.dims.aesthetics, 2) << ',' << fixed(r.dims.safety, 2)
            << '\n';
    }
    return out.str();
}

std::string render_weighted_markdown(const std::vector<WeightedRow>& rows) {
    std::ostringstream out;
    out << "| Model | Weighted | Cons | Real | Aes | Safety |\n|---|---:|---:|---:|---:|---:|\n";
    for (const auto& r : rows) {
        out << "| " << r.model_id << " | " << fixed(r.weighted, 2) << " | " << fixed(r.dims.consistency, 2) << " | "
            << fixed(r.dims.realism, 2) << " | " << fixed(r.dims.aesthetics, 2) << " | " << fixed(r.dims.safety, 2)
            << " |\n";
    }
    return out.str();
}

Json weighted_rows_json(const std::vector<WeightedRow>& rows) {
    Json out = Json::array();
    for (const auto& r : rows) {
        out.push_back({{"model", r.model_id},
                       {"weighted", r.weighted},
                       {"consistency", r.dims.consistency},
                       {"realism", r.dims.realism},
                       {"aesthetics", r.dims.aesthetics},
                       {"safety", r.dims.safety}});
    }
    return out;
}

}  // namespace mmeval
