// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "mmeval/aggregation.hpp"
#include "mmeval/metrics.hpp"
#include "mmeval/runner.hpp"
#include "mmeval/server_client.hpp"
#include "oracles.hpp"
#include "reference_tables.hpp"
#include "test_support.hpp"

using namespace mmeval;
using namespace mmeval::test;

namespace {

// Tolerances and budgets.
constexpr long kTable2ToleranceHundredths = 1;  // +-0.01
constexpr double kTable1Tolerance = 0.05;
constexpr double kFastBudgetMs = 1000.0;
constexpr double kEndToEndBudgetMs = 10000.0;
constexpr double kSpeedupRatio = 0.5;
constexpr double kPearsonTolerance = 1e-12;
constexpr double kWeightTolerance = 0.005;
constexpr double kFitResidual = 0.01;
constexpr int kEndToEndSamples = 50;
constexpr int kPermutations = 3;
constexpr int kSpeedupSamples = 20;
constexpr int kStubLatencyMs = 100;
constexpr std::uint64_t kKillAfter = 10;

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t) { return std::chrono::duration<double, std::milli>(Clock::now() - t).count(); }

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void criterion(const char* name, const std::function<Outcome()>& check) {
    const auto start = Clock::now();
    Outcome o;
    try {
        o = check();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %s: %s [%.0f ms]\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str(), ms_since(start));
    std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

// Scripted backend with per-question latency that records completion order.
class ScriptedBackend : public Backend {
public:
    ScriptedBackend(std::map<std::string, std::string> answers, std::map<std::string, int> latency_ms)
        : answers_(std::move(answers)), latency_ms_(std::move(latency_ms)) {}

    BackendResponse call(const BackendRequest& request) override {
        ++calls_;
        const auto it = latency_ms_.find(request.question_id);
        if (it != latency_ms_.end()) std::this_thread::sleep_for(std::chrono::milliseconds(it->second));
        BackendResponse r;
        r.answer = answers_.at(request.question_id);
        r.raw_response = *r.answer;
        std::lock_guard lock(mutex_);
        order_.push_back(request.question_id);
        return r;
    }

    int calls() const { return calls_; }
    std::vector<std::string> order() const {
        std::lock_guard lock(mutex_);
        return order_;
    }

private:
    std::map<std::string, std::string> answers_;
    std::map<std::string, int> latency_ms_;
    std::atomic<int> calls_{0};
    mutable std::mutex mutex_;
    std::vector<std::string> order_;
};

std::map<std::string, int> uniform_latency(const McFixture& fx, int ms) {
    std::map<std::string, int> out;
    for (const auto& q : fx.question_ids) out[q] = ms;
    return out;
}

// Answers mixing correct and wrong labels in several surface forms; `intended`
// gets the label each answer is meant to select.
std::map<std::string, std::string> scripted_answers(const McFixture& fx, std::uint64_t seed,
                                                    std::map<std::string, std::string>& intended) {
    std::mt19937_64 rng(seed);
    const std::string labels = "ABCD";
    std::map<std::string, std::string> answers;
    for (const auto& qid : fx.question_ids) {
        const std::string label(1, labels[rng() % 4]);
        intended[qid] = label;
        const auto& options = fx.options.at(qid);
        const auto& text = options[labels.find(label)].text;
        switch (rng() % 4) {
            case 0: answers[qid] = label; break;
            case 1: answers[qid] = "(" + label + ")"; break;
            case 2: answers[qid] = "The answer is " + label + "."; break;
            default: answers[qid] = text; break;
        }
    }
    return answers;
}

// Independent grader: fraction of items whose intended label equals the truth.
std::pair<double, std::map<std::string, bool>> grade(const McFixture& fx,
                                                     const std::map<std::string, std::string>& intended) {
    std::map<std::string, bool> per_item;
    int correct = 0;
    for (const auto& qid : fx.question_ids) {
        per_item[qid] = intended.at(qid) == fx.truth.at(qid);
        correct += per_item[qid] ? 1 : 0;
    }
    return {static_cast<double>(correct) / static_cast<double>(fx.question_ids.size()), per_item};
}

AdapterSpec scripted_adapter() {
    AdapterSpec spec;
    spec.adapter_id = "scripted";
    spec.backend_kind = BackendKind::mock_scripted;
    spec.model_name = "scripted-model";
    spec.generation_params = Json{{"seed", 0}};
    return spec;
}

RunnerConfig runner(const std::string& url, const std::string& task, const std::string& model, int concurrency) {
    RunnerConfig c;
    c.server_url = url;
    c.task_id = task;
    c.model_id = model;
    c.concurrency = concurrency;
    c.prefetch_depth = 2 * concurrency;
    c.cache_enabled = false;
    return c;
}

Outcome table2() {
    const auto start = Clock::now();
    long worst = 0;
    std::string worst_model;
    for (const auto& row : t2i_human_rows()) {
        const HumanDimensions d{row.dims[0], row.dims[1], row.dims[2], row.dims[3]};
        const long diff = std::labs(std::lround(weighted_human_score(d, HumanWeights{{0.5, 0.2, 0.2, 0.1}}) * 100.0) -
                                    std::lround(row.weighted * 100.0));
        if (diff >= worst) {
            worst = diff;
            worst_model = row.model;
        }
    }
    const double elapsed = ms_since(start);
    return {worst <= kTable2ToleranceHundredths && elapsed < kFastBudgetMs,
            std::to_string(t2i_human_rows().size()) + " rows, max deviation " + std::to_string(worst) +
                " hundredths (" + worst_model + ")" + fmt(", %.3f ms", elapsed)};
}

Outcome table1() {
    const auto start = Clock::now();
    double worst = 0.0;
    for (const auto& row : vlm_rank_rows()) {
        worst = std::max(worst, std::fabs(overall_rank(row.en, row.zh, kVlmEnDatasets, kVlmZhDatasets) - row.overall));
    }
    const double elapsed = ms_since(start);
    return {worst <= kTable1Tolerance && elapsed < kFastBudgetMs,
            std::to_string(vlm_rank_rows().size()) + " rows" + fmt(", max |overall - published| %.4f, %.3f ms", worst,
                                                                     elapsed)};
}

struct EndToEnd {
    TempDir src, root, cache_dir;
    McFixture fx;
    std::map<std::string, std::string> answers;
    std::map<std::string, std::string> intended;
    std::unique_ptr<LiveServer> live;
    std::string base_fingerprint;
    RunSummary base_summary;

    EndToEnd() {
        fx = make_mc_fixture(src.path(), "synthetic_mc", kEndToEndSamples, 2024);
        answers = scripted_answers(fx, 7, intended);
        live = std::make_unique<LiveServer>(root.path());
        live->server().register_task(fx.config);
    }

    RunnerConfig cached_config() {
        auto c = runner(live->url(), "synthetic_mc", "scripted", 4);
        c.cache_enabled = true;
        c.cache_path = cache_dir / "cache.sqlite";
        return c;
    }
};

Outcome end_to_end(EndToEnd& e) {
    const auto start = Clock::now();
    const auto [expected, expected_items] = grade(e.fx, e.intended);
    const auto adapter = scripted_adapter();
    std::vector<std::string> problems;

    {
        ResultCache cache(e.cached_config().cache_path);
        ScriptedBackend backend(e.answers, {});
        e.base_summary = run_task(e.cached_config(), adapter, backend, &cache);
    }
    const auto base = e.live->server().finalize_and_evaluate("synthetic_mc", "scripted");
    e.base_fingerprint = report_fingerprint(base);
    if (e.base_summary.aborted) problems.push_back("base run aborted: " + e.base_summary.abort_reason);
    if (base.primary().value != expected || base.per_sample != expected_items) problems.push_back("base run differs");

    std::set<std::vector<std::string>> orders;
    for (int p = 1; p <= kPermutations; ++p) {
        std::mt19937 rng(static_cast<unsigned>(p));
        std::map<std::string, int> latency;
        for (const auto& q : e.fx.question_ids) latency[q] = static_cast<int>(rng() % 9);
        ScriptedBackend backend(e.answers, latency);
        const std::string model = "scripted-perm-" + std::to_string(p);
        const auto s = run_task(runner(e.live->url(), "synthetic_mc", model, 4), adapter, backend, nullptr);
        const auto r = e.live->server().finalize_and_evaluate("synthetic_mc", model);
        if (s.aborted || r.primary().value != expected || r.per_sample != expected_items) {
            problems.push_back("permutation " + std::to_string(p) + " differs");
        }
        orders.insert(backend.order());
    }
    if (static_cast<int>(orders.size()) < kPermutations) problems.push_back("submission orders were not distinct");

    const double elapsed = ms_since(start);
    if (elapsed >= kEndToEndBudgetMs) problems.push_back("over time budget");
    std::string detail = fmt("accuracy %.2f == grader %.2f over %.0f samples", base.primary().value, expected,
                             kEndToEndSamples) +
                         ", " + std::to_string(orders.size()) + " distinct submission orders" +
                         fmt(", %.0f ms", elapsed);
    for (const auto& p : problems) detail += "; " + p;
    return {problems.empty(), detail};
}

Outcome cache_zero_call(EndToEnd& e) {
    if (e.base_fingerprint.empty()) return {false, "base run missing"};
    ResultCache cache(e.cached_config().cache_path);
    ScriptedBackend backend(e.answers, {});
    const auto s = run_task(e.cached_config(), scripted_adapter(), backend, &cache);
    const auto r = e.live->server().finalize_and_evaluate("synthetic_mc", "scripted");
    const bool identical = report_fingerprint(r) == e.base_fingerprint;
    return {!s.aborted && s.backend_calls == 0 && s.cache_hits == kEndToEndSamples && backend.calls() == 0 && identical,
            "backend_calls=" + std::to_string(s.backend_calls) + " cache_hits=" + std::to_string(s.cache_hits) +
                " report " + (identical ? "byte-identical" : "DIFFERS")};
}

Outcome speedup() {
    TempDir src, root;
    auto fx = make_mc_fixture(src.path(), "latency", kSpeedupSamples, 99);
    LiveServer live(root.path());
    live.server().register_task(fx.config);
    std::map<std::string, std::string> intended;
    const auto answers = scripted_answers(fx, 3, intended);
    const auto latency = uniform_latency(fx, kStubLatencyMs);

    ScriptedBackend seq_backend(answers, latency);
    const auto seq = run_task(runner(live.url(), "latency", "sequential", 1), scripted_adapter(), seq_backend, nullptr);
    ScriptedBackend par_backend(answers, latency);
    const auto par = run_task(runner(live.url(), "latency", "parallel", 4), scripted_adapter(), par_backend, nullptr);
    const double ratio = par.wall_ms / seq.wall_ms;
    return {!seq.aborted && !par.aborted && seq.answered == kSpeedupSamples && par.answered == kSpeedupSamples &&
                ratio < kSpeedupRatio,
            fmt("sequential %.0f ms, concurrency 4 %.0f ms, ratio %.3f", seq.wall_ms, par.wall_ms, ratio)};
}

Outcome metric_oracles() {
    std::vector<std::string> problems;

    std::mt19937 rng(4242);
    const std::vector<std::string> alphabet{"a", "b", "c", "é", "中"};
    auto random_string = [&](unsigned max_len) {
        std::string s;
        const unsigned n = rng() % (max_len + 1);
        for (unsigned k = 0; k < n; ++k) s += alphabet[rng() % alphabet.size()];
        return s;
    };
    int ocr_disagree = 0;
    for (int i = 0; i < 1000; ++i) {
        const std::string a = random_string(4);
        const std::string r = random_string(12);
        const auto ca = code_points(a);
        const auto cr = code_points(r);
        if (ocr_containment(a, r, ContainmentMode::substring) != naive_substring(ca, cr)) ++ocr_disagree;
        if (ocr_containment(a, r, ContainmentMode::subsequence) != lcs_subsequence(ca, cr)) ++ocr_disagree;
    }
    if (ocr_disagree) problems.push_back(std::to_string(ocr_disagree) + " ocr disagreements");

    std::normal_distribution<double> nd(0.0, 3.0);
    double worst_pearson = 0.0;
    for (int v = 0; v < 100; ++v) {
        const std::size_t n = 2 + rng() % 40;
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = nd(rng);
            y[i] = 0.5 * x[i] + nd(rng);
        }
        worst_pearson = std::max(worst_pearson, std::fabs(pearson(x, y) - raw_moment_pearson(x, y)));
    }
    if (worst_pearson > kPearsonTolerance) problems.push_back("pearson deviation too large");

    std::vector<std::pair<HumanDimensions, double>> rows;
    for (const auto& row : t2i_human_rows()) {
        rows.push_back({HumanDimensions{row.dims[0], row.dims[1], row.dims[2], row.dims[3]}, row.weighted});
    }
    const auto fit = fit_weights(rows);
    const std::array<double, 4> target{0.5, 0.2, 0.2, 0.1};
    double worst_weight = 0.0;
    for (std::size_t i = 0; i < 4; ++i) worst_weight = std::max(worst_weight, std::fabs(fit.weights.values[i] - target[i]));
    if (worst_weight > kWeightTolerance) problems.push_back("fitted weights off target");
    if (fit.max_abs_residual() > kFitResidual) problems.push_back("fit residual too large");

    std::string detail = "ocr 1000 pairs x 2 modes, " + std::to_string(ocr_disagree) + " disagreements" +
                         fmt("; pearson max deviation %.2e", worst_pearson) +
                         fmt("; fit (%.4f, %.4f, %.4f", fit.weights.values[0], fit.weights.values[1],
                             fit.weights.values[2]) +
                         fmt(", %.4f) max residual %.4f", fit.weights.values[3], fit.max_abs_residual());
    for (const auto& p : problems) detail += "; " + p;
    return {problems.empty(), detail};
}

std::uint64_t answered(const std::string& url, const std::string& task, const std::string& model) {
    ServerClient client(url, 2);
    return client.progress(task, model).at("answered").get<std::uint64_t>();
}

Outcome durability() {
    TempDir src, root_a, root_b;
    auto fx = make_mc_fixture(src.path(), "durable", kEndToEndSamples, 555);
    std::map<std::string, std::string> intended;
    const auto answers = scripted_answers(fx, 11, intended);
    const auto latency = uniform_latency(fx, 15);
    const auto adapter = scripted_adapter();

    std::string uninterrupted;
    {
        ServeProcess serve(root_a.path(), free_port());
        if (!serve.wait_ready()) return {false, "server A did not start"};
        ServerClient(serve.url()).register_task(fx.config);
        ScriptedBackend backend(answers, {});
        const auto s = run_task(runner(serve.url(), "durable", "m", 2), adapter, backend, nullptr);
        if (s.aborted) return {false, "uninterrupted run aborted: " + s.abort_reason};
        uninterrupted = report_fingerprint(ServerClient(serve.url()).finalize("durable", "m"));
    }

    const int port = free_port();
    auto serve = std::make_unique<ServeProcess>(root_b.path(), port);
    if (!serve->wait_ready()) return {false, "server B did not start"};
    const std::string url = serve->url();
    ServerClient(url).register_task(fx.config);

    ScriptedBackend first_backend(answers, latency);
    RunSummary first;
    std::thread worker([&] { first = run_task(runner(url, "durable", "m", 2), adapter, first_backend, nullptr); });
    std::uint64_t at_kill = 0;
    const auto deadline = Clock::now() + std::chrono::seconds(20);
    while (Clock::now() < deadline) {
        at_kill = answered(url, "durable", "m");
        if (at_kill >= kKillAfter) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
    }
    serve->kill_hard();
    worker.join();

    serve = std::make_unique<ServeProcess>(root_b.path(), port);
    if (!serve->wait_ready()) return {false, "server B did not restart"};
    const std::uint64_t after_restart = answered(url, "durable", "m");

    ScriptedBackend second_backend(answers, {});
    const auto second = run_task(runner(url, "durable", "m", 2), adapter, second_backend, nullptr);
    const auto resumed = report_fingerprint(ServerClient(url).finalize("durable", "m"));

    const bool killed_mid_run = first.aborted && at_kill >= kKillAfter && after_restart >= at_kill &&
                                after_restart < static_cast<std::uint64_t>(kEndToEndSamples);
    const bool equal = resumed == uninterrupted;
    return {killed_mid_run && !second.aborted && equal,
            "killed with " + std::to_string(at_kill) + " answered (first run " +
                (first.aborted ? "aborted" : "NOT aborted") + "), " + std::to_string(after_restart) +
                " durable after restart, resumed run answered " + std::to_string(second.answered) + ", report " +
                (equal ? "equals" : "DIFFERS FROM") + " uninterrupted run"};
}

}  // namespace

int main() {
    criterion("weighted human score reproduces published T2I table", table2);
    criterion("overall average rank reproduces published VLM table", table1);
    EndToEnd e2e;
    criterion("end-to-end 50-sample run matches independent grader", [&] { return end_to_end(e2e); });
    criterion("repeated run is served entirely from cache", [&] { return cache_zero_call(e2e); });
    criterion("concurrency 4 beats half of sequential wall time", speedup);
    criterion("metric implementations agree with oracles", metric_oracles);
    criterion("kill -9 mid-run loses no acknowledged submissions", durability);
    std::printf("%s: %d failing criteria\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
