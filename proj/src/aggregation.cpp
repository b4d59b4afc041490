#include "mmeval/aggregation.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mmeval {

std::string_view to_string(Language l) { return l == Language::EN ? "EN" : "ZH"; }

std::string_view to_string(Capability c) {
    switch (c) {
        case Capability::Gen: return "Gen";
        case Capability::Math: return "Math";
        case Capability::Chart: return "Chart";
        case Capability::Vis: return "Vis";
        case Capability::Text: return "Text";
    }
    return "Gen";
}

Language language_from_string(std::string_view s) {
    if (s == "EN" || s == "en") return Language::EN;
    if (s == "ZH" || s == "zh") return Language::ZH;
    throw std::invalid_argument("unknown language: " + std::string(s));
}

Capability capability_from_string(std::string_view s) {
    for (auto c : kAllCapabilities) {
        if (to_string(c) == s) return c;
    }
    throw std::invalid_argument("unknown capability: " + std::string(s));
}

void ScoreTable::annotate(const std::string& dataset, DatasetAnnotation annotation) {
    datasets_.insert(dataset);
    annotations_[dataset] = std::move(annotation);
}

void ScoreTable::add_model(const std::string& model) { models_.insert(model); }

void ScoreTable::set(const std::string& model, const std::string& dataset, double score) {
    if (!(score >= 0.0 && score <= 100.0)) {
        throw std::out_of_range("score for " + model + " on " + dataset + " outside [0, 100]");
    }
    models_.insert(model);
    datasets_.insert(dataset);
    cells_[{model, dataset}] = score;
}

std::optional<double> ScoreTable::get(const std::string& model, const std::string& dataset) const {
    auto it = cells_.find({model, dataset});
    if (it == cells_.end()) return std::nullopt;
    return it->second;
}

const DatasetAnnotation& ScoreTable::annotation(const std::string& dataset) const {
    auto it = annotations_.find(dataset);
    if (it == annotations_.end()) throw std::invalid_argument("dataset " + dataset + " has no annotation");
    return it->second;
}

std::size_t ScoreTable::count(Language language) const {
    return static_cast<std::size_t>(std::count_if(datasets_.begin(), datasets_.end(), [&](const auto& d) {
        return annotation(d).language == language;
    }));
}

void ScoreTable::validate() const {
    for (const auto& d : datasets_) annotation(d);
}

std::optional<double> capability_score(const ScoreTable& table, const std::string& model, Capability capability) {
    std::size_t tagged = 0;
    std::size_t present = 0;
    double sum = 0.0;
    for (const auto& dataset : table.datasets()) {
        if (!table.annotation(dataset).capabilities.contains(capability)) continue;
        ++tagged;
        if (auto score = table.get(model, dataset)) {
            sum += *score;
            ++present;
        }
    }
    if (tagged == 0) {
        throw std::invalid_argument("no dataset is tagged with capability " + std::string(to_string(capability)));
    }
    if (present == 0) return std::nullopt;
    return sum / static_cast<double>(present);
}

std::map<Capability, double> capability_scores(const ScoreTable& table, const std::string& model) {
    if (!table.models().contains(model)) throw std::invalid_argument("unknown model " + model);
    std::map<Capability, double> out;
    for (auto cap : kAllCapabilities) {
        const bool tagged = std::any_of(table.datasets().begin(), table.datasets().end(), [&](const auto& d) {
            return table.annotation(d).capabilities.contains(cap);
        });
        if (!tagged) continue;
        if (auto score = capability_score(table, model, cap)) out[cap] = *score;
    }
    return out;
}

std::map<std::string, double> rank_column(const ScoreTable& table, const std::string& dataset) {
    std::vector<std::pair<std::string, double>> scored;
    std::vector<std::string> missing;
    for (const auto& model : table.models()) {
        if (auto s = table.get(model, dataset)) {
            scored.emplace_back(model, *s);
        } else {
            missing.push_back(model);
        }
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    std::map<std::string, double> ranks;
    std::size_t i = 0;
    while (i < scored.size()) {
        std::size_t j = i;
        while (j + 1 < scored.size() && scored[j + 1].second == scored[i].second) ++j;
        // positions i+1 .. j+1 share their mean
        const double rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) ranks[scored[k].first] = rank;
        i = j + 1;
    }
    if (!missing.empty()) {
        const double first = static_cast<double>(scored.size() + 1);
        const double last = static_cast<double>(table.models().size());
        for (const auto& m : missing) ranks[m] = (first + last) / 2.0;
    }
    return ranks;
}

double overall_rank(double en_avg_rank, double zh_avg_rank, std::size_t n_en, std::size_t n_zh) {
    if (n_en + n_zh == 0) throw std::invalid_argument("no datasets to combine");
    return (static_cast<double>(n_en) * en_avg_rank + static_cast<double>(n_zh) * zh_avg_rank) /
           static_cast<double>(n_en + n_zh);
}

std::vector<LeaderboardRow> average_ranks(const ScoreTable& table) {
    table.validate();
    if (table.models().empty()) throw std::invalid_argument("score table has no models");
    if (table.datasets().empty()) throw std::invalid_argument("score table has no datasets");

    std::map<std::string, std::array<double, 2>> sums;  // EN, ZH
    for (const auto& dataset : table.datasets()) {
        const auto lang = static_cast<std::size_t>(table.annotation(dataset).language);
        for (const auto& [model, rank] : rank_column(table, dataset)) sums[model][lang] += rank;
    }
    const std::size_t n_en = table.count(Language::EN);
    const std::size_t n_zh = table.count(Language::ZH);

    std::vector<LeaderboardRow> rows;
    for (const auto& model : table.models()) {
        LeaderboardRow row;
        row.model_id = model;
        if (n_en) row.en_avg_rank = sums[model][0] / static_cast<double>(n_en);
        if (n_zh) row.zh_avg_rank = sums[model][1] / static_cast<double>(n_zh);
        row.overall_avg_rank = overall_rank(row.en_avg_rank.value_or(0.0), row.zh_avg_rank.value_or(0.0), n_en, n_zh);
        row.capability_scores = capability_scores(table, model);
        rows.push_back(std::move(row));
    }
    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        if (a.overall_avg_rank != b.overall_avg_rank) return a.overall_avg_rank < b.overall_avg_rank;
        return a.model_id < b.model_id;
    });
    return rows;
}

void HumanWeights::validate() const {
    double sum = 0.0;
    for (double w : values) {
        if (!(w >= 0.0)) throw std::invalid_argument("weights must be nonnegative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("weights must sum to 1");
}

double round_to(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::round(value * scale) / scale;
}

double weighted_human_score(const HumanDimensions& dims, const HumanWeights& weights) {
    weights.validate();
    const auto d = dims.as_array();
    double dot = 0.0;
    for (std::size_t i = 0; i < 4; ++i) dot += d[i] * weights.values[i];
    return round_to(dot, 2);
}

double WeightFit::max_abs_residual() const {
    double m = 0.0;
    for (double r : residuals) m = std::max(m, std::abs(r));
    return m;
}

WeightFit fit_weights(std::span<const std::pair<HumanDimensions, double>> rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    if (n < 4) throw std::invalid_argument("fit_weights needs at least 4 rows, got " + std::to_string(n));

    Eigen::MatrixXd full(n, 4);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto d = rows[static_cast<std::size_t>(i)].first.as_array();
        for (Eigen::Index k = 0; k < 4; ++k) full(i, k) = d[static_cast<std::size_t>(k)];
        y(i) = rows[static_cast<std::size_t>(i)].second;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> rank_check(full);
    if (rank_check.rank() < 4) throw std::invalid_argument("fit_weights: rows are not linearly independent");

    // Substitute w4 = 1 - w1 - w2 - w3 and solve the reduced problem.
    Eigen::MatrixXd reduced = full.leftCols(3).colwise() - full.col(3);
    Eigen::VectorXd target = y - full.col(3);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(reduced);
    if (qr.rank() < 3) throw std::invalid_argument("fit_weights: constrained system is underdetermined");
    Eigen::Vector3d w = qr.solve(target);

    WeightFit fit;
    fit.weights.values = {w(0), w(1), w(2), 1.0 - w.sum()};
    Eigen::Vector4d w4(fit.weights.values[0], fit.weights.values[1], fit.weights.values[2], fit.weights.values[3]);
    Eigen::VectorXd residual = full * w4 - y;
    fit.residuals.assign(residual.data(), residual.data() + residual.size());
    return fit;
}

double pearson(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("pearson: length mismatch");
    if (x.size() < 2) throw std::invalid_argument("pearson: need at least two points");
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0.0;
    double sxx = 0.0;
    double syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw std::domain_error("pearson: zero variance");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double normalize_five_point(double mean) {
    if (!(mean >= 1.0 && mean <= 5.0)) throw std::out_of_range("five-point mean outside [1, 5]");
    return (mean - 1.0) / 4.0 * 100.0;
}

}  // namespace mmeval
