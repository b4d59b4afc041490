#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <mutex>
#include <random>
#include <set>
#include <thread>

#include "mmeval/runner.hpp"
#include "test_support.hpp"

using namespace mmeval;
using namespace mmeval::test;

namespace {

// Scripted backend that records call counts and peak parallelism.
class ProbeBackend : public Backend {
public:
    ProbeBackend(std::map<std::string, std::string> answers, int latency_ms, std::set<std::string> failing = {})
        : answers_(std::move(answers)), latency_ms_(latency_ms), failing_(std::move(failing)) {}

    BackendResponse call(const BackendRequest& request) override {
        const int now = ++in_flight_;
        int peak = peak_.load();
        while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
        }
        ++calls_;
        {
            std::lock_guard lock(mutex_);
            seen_.insert(request.question_id);
            media_sizes_.push_back(request.media.size());
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(latency_ms_));
        --in_flight_;
        if (failing_.count(request.question_id)) throw BackendFailure("scripted failure", 3, 500);
        BackendResponse r;
        if (request.want_artifact) {
            r.artifact_bytes = "artifact for " + request.prompt;
            r.artifact_mime = "image/png";
        } else {
            r.answer = answers_.at(request.question_id);
        }
        r.raw_response = "raw";
        return r;
    }

    int calls() const { return calls_; }
    int peak() const { return peak_; }
    std::set<std::string> seen() const {
        std::lock_guard lock(mutex_);
        return seen_;
    }
    std::vector<std::size_t> media_sizes() const {
        std::lock_guard lock(mutex_);
        return media_sizes_;
    }

private:
    std::map<std::string, std::string> answers_;
    int latency_ms_;
    std::set<std::string> failing_;
    std::atomic<int> in_flight_{0}, peak_{0}, calls_{0};
    mutable std::mutex mutex_;
    std::set<std::string> seen_;
    std::vector<std::size_t> media_sizes_;
};

// Answers with a mix of correct and wrong labels in several surface forms.
std::map<std::string, std::string> mixed_answers(const McFixture& fx, std::uint64_t seed,
                                                 std::map<std::string, bool>& expected) {
    std::mt19937_64 rng(seed);
    const std::string labels = "ABCD";
    std::map<std::string, std::string> answers;
    for (const auto& qid : fx.question_ids) {
        const bool correct = rng() % 2 == 0;
        std::string label = fx.truth.at(qid);
        if (!correct) label = std::string(1, labels[(labels.find(label) + 1 + rng() % 3) % 4]);
        expected[qid] = correct;
        switch (rng() % 3) {
            case 0: answers[qid] = label; break;
            case 1: answers[qid] = "(" + label + ")"; break;
            default: answers[qid] = label + ". something"; break;
        }
    }
    return answers;
}

double fraction_true(const std::map<std::string, bool>& m) {
    std::size_t k = 0;
    for (const auto& [_, v] : m) k += v ? 1 : 0;
    return static_cast<double>(k) / static_cast<double>(m.size());
}

AdapterSpec scripted_spec() {
    AdapterSpec spec;
    spec.adapter_id = "probe";
    spec.backend_kind = BackendKind::mock_scripted;
    spec.model_name = "probe-model";
    spec.generation_params = Json{{"seed", 0}};
    return spec;
}

RunnerConfig runner_config(const std::string& url, const std::string& task, const std::string& model,
                           int concurrency) {
    RunnerConfig c;
    c.server_url = url;
    c.task_id = task;
    c.model_id = model;
    c.concurrency = concurrency;
    c.prefetch_depth = 2 * concurrency;
    c.retry = RetryPolicy{2, 5};
    c.cache_enabled = false;
    return c;
}

}  // namespace

TEST(Runner, ScoresMatchIndependentGrading) {
    TempDir src, root;
    auto fx = make_mc_fixture(src.path(), "mc", 40, 11);
    LiveServer live(root.path());
    live.server().register_task(fx.config);
    std::map<std::string, bool> expected;
    ProbeBackend backend(mixed_answers(fx, 5, expected), 0);

    const auto s = run_task(runner_config(live.url(), "mc", "m", 4), scripted_spec(), backend, nullptr);
    EXPECT_FALSE(s.aborted) << s.abort_reason;
    EXPECT_EQ(s.samples, 40u);
    EXPECT_EQ(s.answered, 40u);
    EXPECT_EQ(s.backend_calls, 40u);
    EXPECT_EQ(s.failures, 0u);
    EXPECT_EQ(backend.seen().size(), 40u);
    for (auto n : backend.media_sizes()) EXPECT_EQ(n, 1u);

    const auto report = live.server().finalize_and_evaluate("mc", "m");
    EXPECT_EQ(report.per_sample, expected);
    EXPECT_DOUBLE_EQ(report.primary().value, fraction_true(expected));
}

TEST(Runner, ConcurrencyIsBoundedAndDoesNotChangeResults) {
    TempDir src, root;
    auto fx = make_mc_fixture(src.path(), "mc", 24, 2);
    LiveServer live(root.path());
    live.server().register_task(fx.config);
    std::map<std::string, bool> expected;
    const auto answers = mixed_answers(fx, 9, expected);

    std::string first;
    for (int c : {1, 3, 8}) {
        ProbeBackend backend(answers, 15);
        const std::string model = "m" + std::to_string(c);
        const auto s = run_task(runner_config(live.url(), "mc", model, c), scripted_spec(), backend, nullptr);
        EXPECT_EQ(s.answered, 24u);
        EXPECT_LE(backend.peak(), c);
        EXPECT_EQ(backend.peak(), c);
        const auto report = live.server().finalize_and_evaluate("mc", model);
        EXPECT_EQ(report.per_sample, expected);
    }
}

TEST(Runner, ColdRunFillsCacheAndWarmRunMakesNoCalls) {
    TempDir src, root, cache_dir;
    auto fx = make_mc_fixture(src.path(), "mc", 20, 3);
    LiveServer live(root.path());
    live.server().register_task(fx.config);
    std::map<std::string, bool> expected;
    const auto answers = mixed_answers(fx, 1, expected);

    EvaluationReport cold_report, warm_report;
    {
        ResultCache cache(cache_dir / "c.sqlite");
        ProbeBackend backend(answers, 0);
        const auto s = run_task(runner_config(live.url(), "mc", "cold", 4), scripted_spec(), backend, &cache);
        EXPECT_EQ(s.backend_calls, 20u);
        EXPECT_EQ(s.cache_hits, 0u);
        EXPECT_EQ(cache.size(), 20u);
        cold_report = live.server().finalize_and_evaluate("mc", "cold");
    }
    {
        ResultCache cache(cache_dir / "c.sqlite");
        ProbeBackend backend(answers, 0);
        const auto s = run_task(runner_config(live.url(), "mc", "warm", 4), scripted_spec(), backend, &cache);
        EXPECT_EQ(s.backend_calls, 0u);
        EXPECT_EQ(s.cache_hits, 20u);
        EXPECT_EQ(backend.calls(), 0);
        warm_report = live.server().finalize_and_evaluate("mc", "warm");
    }
    warm_report.model_id = cold_report.model_id;
    EXPECT_EQ(report_fingerprint(warm_report), report_fingerprint(cold_report));
}

TEST(Runner, ChangedGenerationParamsMissTheCache) {
    TempDir src, root, cache_dir;
    auto fx = make_mc_fixture(src.path(), "mc", 6, 4);
    LiveServer live(root.path());
    live.server().register_task(fx.config);
    std::map<std::string, bool> expected;
    const auto answers = mixed_answers(fx, 2, expected);
    ResultCache cache(cache_dir / "c.sqlite");
    ProbeBackend b1(answers, 0), b2(answers, 0);
    run_task(runner_config(live.url(), "mc", "a", 2), scripted_spec(), b1, &cache);
    auto spec = scripted_spec();
    spec.generation_params["temperature"] = 0.7;
    const auto s = run_task(runner_config(live.url(), "mc", "b", 2), spec, b2, &cache);
    EXPECT_EQ(s.backend_calls, 6u);
    EXPECT_EQ(s.cache_hits, 0u);
}

TEST(Runner, BackendFailuresBecomeFailureRecords) {
    TempDir src, root, cache_dir;
    auto fx = make_mc_fixture(src.path(), "mc", 10, 5);
    LiveServer live(root.path());
    live.server().register_task(fx.config);
    std::map<std::string, bool> expected;
    const auto answers = mixed_answers(fx, 3, expected);
    ResultCache cache(cache_dir / "c.sqlite");
    const std::set<std::string> failing{fx.question_ids[2], fx.question_ids[7]};
    ProbeBackend bad(answers, 0, failing);
    const auto s = run_task(runner_config(live.url(), "mc", "m", 3), scripted_spec(), bad, &cache);
    EXPECT_FALSE(s.aborted);
    EXPECT_EQ(s.answered, 8u);
    EXPECT_EQ(s.failures, 2u);
    EXPECT_EQ(cache.size(), 8u);
    EXPECT_EQ(live.server().progress("mc", "m").answered, 8u);

    // A rerun replaces the failure records and takes the rest from the cache.
    ProbeBackend good(answers, 0);
    const auto again = run_task(runner_config(live.url(), "mc", "m", 3), scripted_spec(), good, &cache);
    EXPECT_EQ(again.backend_calls, 2u);
    EXPECT_EQ(again.cache_hits, 8u);
    EXPECT_EQ(again.answered, 10u);
    const auto report = live.server().finalize_and_evaluate("mc", "m");
    EXPECT_EQ(report.num_answered, 10u);
    EXPECT_EQ(report.per_sample, expected);
}

TEST(Runner, ShardsPartitionTheTask) {
    TempDir src, root;
    auto fx = make_mc_fixture(src.path(), "mc", 17, 6);
    LiveServer live(root.path());
    live.server().register_task(fx.config);
    std::map<std::string, bool> expected;
    const auto answers = mixed_answers(fx, 4, expected);
    std::set<std::string> all;
    std::uint64_t total = 0;
    for (int i = 0; i < 3; ++i) {
        ProbeBackend backend(answers, 0);
        auto config = runner_config(live.url(), "mc", "m", 2);
        config.shard_index = i;
        config.shard_count = 3;
        const auto s = run_task(config, scripted_spec(), backend, nullptr);
        total += s.samples;
        for (const auto& q : backend.seen()) EXPECT_TRUE(all.insert(q).second) << q;
    }
    EXPECT_EQ(total, 17u);
    EXPECT_EQ(all.size(), 17u);
    EXPECT_EQ(live.server().finalize_and_evaluate("mc", "m").per_sample, expected);
}

TEST(Shard, ParseAndRanges) {
    EXPECT_EQ(parse_shard("0/1"), std::make_pair(0, 1));
    EXPECT_EQ(parse_shard("2/5"), std::make_pair(2, 5));
    for (const char* bad : {"", "1", "1/1", "-1/2", "a/b", "1/0", "0/2x", "0 /2"}) {
        EXPECT_THROW(parse_shard(bad), EvalError) << bad;
    }
    for (std::uint64_t n : {0u, 1u, 7u, 100u, 101u}) {
        for (int k = 1; k <= 9; ++k) {
            std::uint64_t expected_begin = 0;
            for (int i = 0; i < k; ++i) {
                const auto [b, e] = shard_range(n, i, k);
                EXPECT_EQ(b, expected_begin);
                EXPECT_LE(e - b, n / k + 1);
                EXPECT_GE(e - b, n / k);
                expected_begin = e;
            }
            EXPECT_EQ(expected_begin, n);
        }
    }
}

TEST(Runner, UnreachableServerAborts) {
    ProbeBackend backend({}, 0);
    const auto s = run_task(runner_config("http://127.0.0.1:" + std::to_string(free_port()), "mc", "m", 2),
                            scripted_spec(), backend, nullptr);
    EXPECT_TRUE(s.aborted);
    EXPECT_FALSE(s.abort_reason.empty());
    EXPECT_EQ(backend.calls(), 0);
}

TEST(Runner, LosingTheServerMidRunAborts) {
    TempDir src, root;
    auto fx = make_mc_fixture(src.path(), "mc", 60, 7);
    LiveServer live(root.path());
    live.server().register_task(fx.config);
    std::map<std::string, bool> expected;
    ProbeBackend backend(mixed_answers(fx, 6, expected), 20);
    std::thread killer([&] {
        while (backend.calls() < 8) std::this_thread::sleep_for(std::chrono::milliseconds(2));
        live.stop();
    });
    const auto s = run_task(runner_config(live.url(), "mc", "m", 2), scripted_spec(), backend, nullptr);
    killer.join();
    EXPECT_TRUE(s.aborted);
    EXPECT_LT(s.answered, 60u);
    EXPECT_LT(backend.calls(), 60);
}

TEST(Runner, UnknownTaskAborts) {
    TempDir root;
    LiveServer live(root.path());
    ProbeBackend backend({}, 0);
    const auto s = run_task(runner_config(live.url(), "ghost", "m", 1), scripted_spec(), backend, nullptr);
    EXPECT_TRUE(s.aborted);
    EXPECT_NE(s.abort_reason.find("ghost"), std::string::npos);
}

TEST(Runner, GenerationTaskUploadsArtifacts) {
    TempDir src, root;
    std::string text;
    for (int i = 0; i < 5; ++i) text += "a picture of object " + std::to_string(i) + "\n";
    write_text(src / "prompts.txt", text);
    write_text(src / "gen.json", Json{{"task_id", "gen"},
                                      {"dataset_path", "prompts.txt"},
                                      {"processed_dataset_path", "gen"},
                                      {"processor", "prompt_list"},
                                      {"task_type", "T2I"},
                                      {"metric_specs", {"human_binary"}}}
                                     .dump());
    LiveServer live(root.path());
    live.server().register_task(load_task_config(src / "gen.json"));
    ProbeBackend backend({}, 0);
    const auto s = run_task(runner_config(live.url(), "gen", "painter", 2), scripted_spec(), backend, nullptr);
    EXPECT_EQ(s.answered, 5u);
    const auto meta = live.server().get_meta("gen");
    for (std::uint64_t i = 0; i < meta.num_samples; ++i) {
        const auto sample = live.server().get_data("gen", static_cast<std::int64_t>(i));
        EXPECT_TRUE(backend.seen().count(sample.question_id));
    }
    EXPECT_EQ(live.server().progress("gen", "painter").answered, 5u);
}

TEST(RunnerConfig, Validation) {
    auto ok = runner_config("http://127.0.0.1:1", "t", "m", 2);
    EXPECT_NO_THROW(ok.validate());
    auto c = ok;
    c.concurrency = 0;
    EXPECT_THROW(c.validate(), EvalError);
    c = ok;
    c.prefetch_depth = 1;
    EXPECT_THROW(c.validate(), EvalError);
    c = ok;
    c.shard_index = 2;
    c.shard_count = 2;
    EXPECT_THROW(c.validate(), EvalError);
    c = ok;
    c.model_id = "";
    EXPECT_THROW(c.validate(), EvalError);
}

TEST(RunSummary, JsonShape) {
    RunSummary s;
    s.samples = 3;
    s.answered = 2;
    s.failures = 1;
    auto j = summary_json(s);
    EXPECT_EQ(j.at("answered"), 2);
    EXPECT_FALSE(j.contains("abort_reason"));
    s.aborted = true;
    s.abort_reason = "gone";
    EXPECT_EQ(summary_json(s).at("abort_reason"), "gone");
}
