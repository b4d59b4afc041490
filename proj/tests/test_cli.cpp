#include <gtest/gtest.h>
#include <httplib.h>

#include <cmath>
#include <random>

#include "mmeval/annotation.hpp"
#include "mmeval/csv.hpp"
#include "reference_tables.hpp"
#include "test_support.hpp"

using namespace mmeval;
using namespace mmeval::test;

namespace {

Json json_out(const ProcessResult& r) {
    EXPECT_EQ(r.exit_code, 0) << r.err;
    return Json::parse(r.out);
}

// A served data root with one synthetic multiple-choice task.
struct Served {
    TempDir src, root, work;
    int port = free_port();
    ServeProcess proc{root.path(), port};
    McFixture fx;

    Served(int n, std::uint64_t seed) {
        fx = make_mc_fixture(src.path(), "mc", n, seed);
        EXPECT_TRUE(proc.wait_ready());
    }
    std::string url() const { return proc.url(); }
};

std::map<std::string, std::string> answers_with_accuracy(const McFixture& fx, std::size_t correct) {
    std::map<std::string, std::string> answers;
    for (std::size_t i = 0; i < fx.question_ids.size(); ++i) {
        const auto& qid = fx.question_ids[i];
        const std::string& t = fx.truth.at(qid);
        answers[qid] = i < correct ? t : (t == "A" ? "B" : "A");
    }
    return answers;
}

}  // namespace

TEST(Cli, UsageErrorsExitWithTwo) {
    EXPECT_EQ(run_mmeval({}).exit_code, 2);
    EXPECT_EQ(run_mmeval({"frobnicate"}).exit_code, 2);
    EXPECT_EQ(run_mmeval({"run", "--server", "http://x"}).exit_code, 2);
    EXPECT_EQ(run_mmeval({"serve", "--threads", "0"}).exit_code, 2);
    TempDir dir;
    write_text(dir / "t.json", "{}");
    const auto both = run_mmeval({"task", "add", (dir / "t.json").string()});
    EXPECT_EQ(both.exit_code, 2);
    EXPECT_NE(both.err.find("--server"), std::string::npos);

    const auto version = run_mmeval({"--version"});
    EXPECT_EQ(version.exit_code, 0);
    EXPECT_NE(version.out.find("mmeval"), std::string::npos);
    EXPECT_EQ(run_mmeval({"--help"}).exit_code, 0);
}

TEST(Cli, EndToEndRunFinalizeAndCache) {
    Served s(12, 21);
    const auto cache = (s.work / "cache.sqlite").string();
    const auto added = json_out(run_mmeval({"task", "add", s.fx.config_file.string(), "--server", s.url(), "--json"}));
    EXPECT_EQ(added.at("task_id"), "mc");
    const auto listed = json_out(run_mmeval({"task", "list", "--server", s.url(), "--json"}));
    ASSERT_EQ(listed.size(), 1u);
    EXPECT_EQ(listed[0].at("task_id"), "mc");

    const auto adapter = write_scripted_adapter(s.work / "adapter.json", answers_with_accuracy(s.fx, 9));
    const std::vector<std::string> run_args{"run", "--server", s.url(), "--task", "mc", "--adapter-config",
                                            adapter.string(), "--concurrency", "3", "--cache-path", cache, "--json"};
    auto args = run_args;
    args.insert(args.end(), {"--model-id", "first"});
    const auto cold = json_out(run_mmeval(args));
    EXPECT_EQ(cold.at("answered"), 12);
    EXPECT_EQ(cold.at("backend_calls"), 12);

    const auto report = json_out(run_mmeval({"finalize", "--server", s.url(), "--task", "mc", "--model-id", "first",
                                             "--json"}));
    EXPECT_DOUBLE_EQ(report.at("metrics").at(0).at("value").get<double>(), 9.0 / 12.0);
    EXPECT_EQ(report.at("num_answered"), 12);

    args = run_args;
    args.insert(args.end(), {"--model-id", "second"});
    const auto warm = json_out(run_mmeval(args));
    EXPECT_EQ(warm.at("cache_hits"), 12);
    EXPECT_EQ(warm.at("backend_calls"), 0);

    const auto text = run_mmeval({"finalize", "--server", s.url(), "--task", "mc", "--model-id", "second"});
    EXPECT_EQ(text.exit_code, 0);
    EXPECT_NE(text.out.find("choice_accuracy = 0.7500"), std::string::npos) << text.out;
}

TEST(Cli, ShardedRunsCoverTheTask) {
    Served s(10, 22);
    json_out(run_mmeval({"task", "add", s.fx.config_file.string(), "--server", s.url(), "--json"}));
    const auto adapter = write_scripted_adapter(s.work / "adapter.json", answers_with_accuracy(s.fx, 10));
    std::int64_t total = 0;
    for (const char* shard : {"0/2", "1/2"}) {
        const auto r = json_out(run_mmeval({"run", "--server", s.url(), "--task", "mc", "--model-id", "m",
                                            "--adapter-config", adapter.string(), "--shard", shard, "--no-cache",
                                            "--json"}));
        total += r.at("samples").get<std::int64_t>();
    }
    EXPECT_EQ(total, 10);
    const auto report =
        json_out(run_mmeval({"finalize", "--server", s.url(), "--task", "mc", "--model-id", "m", "--json"}));
    EXPECT_DOUBLE_EQ(report.at("metrics").at(0).at("value").get<double>(), 1.0);
    const auto bad = run_mmeval({"run", "--server", s.url(), "--task", "mc", "--model-id", "m", "--adapter-config",
                                 adapter.string(), "--shard", "2/2", "--no-cache"});
    EXPECT_EQ(bad.exit_code, 1);
    EXPECT_NE(bad.err.find("INVALID_CONFIG"), std::string::npos);
}

TEST(Cli, DomainErrorsExitWithOne) {
    Served s(3, 23);
    const auto unknown = run_mmeval({"finalize", "--server", s.url(), "--task", "ghost", "--model-id", "m"});
    EXPECT_EQ(unknown.exit_code, 1);
    EXPECT_NE(unknown.err.find("UNKNOWN_TASK"), std::string::npos);

    json_out(run_mmeval({"task", "add", s.fx.config_file.string(), "--server", s.url(), "--json"}));
    const auto again = run_mmeval({"task", "add", s.fx.config_file.string(), "--server", s.url()});
    EXPECT_EQ(again.exit_code, 1);
    EXPECT_NE(again.err.find("DUPLICATE_TASK"), std::string::npos);

    const auto none = run_mmeval({"finalize", "--server", s.url(), "--task", "mc", "--model-id", "nobody"});
    EXPECT_EQ(none.exit_code, 1);
    EXPECT_NE(none.err.find("NO_SUBMISSIONS"), std::string::npos);

    const auto adapter = write_scripted_adapter(s.work / "adapter.json", {{"q000", "A"}});
    const auto gone = run_mmeval({"run", "--server", "http://127.0.0.1:" + std::to_string(free_port()), "--task", "mc",
                                  "--model-id", "m", "--adapter-config", adapter.string(), "--no-cache"});
    EXPECT_EQ(gone.exit_code, 1);
    EXPECT_NE(gone.err.find("aborted"), std::string::npos);

    write_text(s.work / "bad_adapter.json", R"({"backend_kind":"telepathy","model_name":"m"})");
    const auto bad = run_mmeval({"run", "--server", s.url(), "--task", "mc", "--model-id", "m", "--adapter-config",
                                 (s.work / "bad_adapter.json").string(), "--no-cache"});
    EXPECT_EQ(bad.exit_code, 1);
    EXPECT_NE(bad.err.find("INVALID_CONFIG"), std::string::npos);
}

TEST(Cli, ServeRefusesATakenPortAndABadDataRoot) {
    Served s(2, 24);
    const auto taken = run_mmeval({"serve", "--bind", "127.0.0.1:" + std::to_string(s.port), "--data-root",
                                   (s.work / "other").string()});
    EXPECT_EQ(taken.exit_code, 1);
    EXPECT_FALSE(taken.err.empty());

    const auto bad_root = run_mmeval({"serve", "--bind", "127.0.0.1:" + std::to_string(free_port()), "--data-root",
                                      "/proc/self/no-such-dir/root"});
    EXPECT_EQ(bad_root.exit_code, 1);

    const auto bad_bind = run_mmeval({"serve", "--bind", "nonsense", "--data-root", (s.work / "x").string()});
    EXPECT_NE(bad_bind.exit_code, 0);
}

TEST(Cli, ServeStopsCleanlyOnSigterm) {
    TempDir root;
    ServeProcess proc(root.path(), free_port());
    ASSERT_TRUE(proc.wait_ready());
    EXPECT_EQ(proc.terminate(), 0);
}

TEST(Cli, ServeReadsDataRootFromEnvironment) {
    const auto r = run_mmeval({"serve", "--bind", "127.0.0.1:" + std::to_string(free_port())},
                              {{"MMEVAL_DATA_ROOT", "/proc/self/no-such-dir/root"}});
    EXPECT_EQ(r.exit_code, 1);
    EXPECT_NE(r.err.find("/proc/self/no-such-dir/root"), std::string::npos) << r.err;
}

TEST(Cli, TaskAddIntoDataRootIsServedLater) {
    TempDir src, root;
    auto fx = make_mc_fixture(src.path(), "mc", 4, 25);
    const auto added = run_mmeval({"task", "add", fx.config_file.string(), "--data-root", root.path().string()});
    EXPECT_EQ(added.exit_code, 0) << added.err;
    EXPECT_NE(added.out.find("registered mc"), std::string::npos);
    ServeProcess proc(root.path(), free_port());
    ASSERT_TRUE(proc.wait_ready());
    const auto listed = json_out(run_mmeval({"task", "list", "--server", proc.url(), "--json"}));
    ASSERT_EQ(listed.size(), 1u);
    EXPECT_EQ(listed[0].at("task_id"), "mc");
}

TEST(Cli, LeaderboardFromLanguageRanks) {
    TempDir dir;
    std::string csv = "model,en_avg_rank,zh_avg_rank\n";
    for (const auto& r : vlm_rank_rows()) {
        csv += r.model + "," + std::to_string(r.en) + "," + std::to_string(r.zh) + "\n";
    }
    write_text(dir / "ranks.csv", csv);
    const auto rows = json_out(run_mmeval({"leaderboard", (dir / "ranks.csv").string(), "--json"}));
    ASSERT_EQ(rows.size(), vlm_rank_rows().size());
    std::map<std::string, double> published;
    for (const auto& r : vlm_rank_rows()) published[r.model] = r.overall;
    double previous = 0.0;
    for (const auto& row : rows) {
        const double got = row.at("overall_avg_rank").get<double>();
        EXPECT_NEAR(got, published.at(row.at("model").get<std::string>()), 0.05) << row.at("model");
        EXPECT_GE(got, previous);
        previous = got;
    }

    const auto out_file = dir / "board.md";
    const auto md = run_mmeval({"leaderboard", (dir / "ranks.csv").string(), "--format", "md", "-o", out_file.string()});
    EXPECT_EQ(md.exit_code, 0) << md.err;
    EXPECT_NE(mmeval::read_file(out_file).find("| gemini-2.0-pro"), std::string::npos);
}

TEST(Cli, LeaderboardFromHumanScores) {
    TempDir dir;
    std::string csv = "model,consistency,realism,aesthetics,safety\n";
    for (const auto& r : t2i_human_rows()) {
        csv += r.model;
        for (double d : r.dims) csv += "," + std::to_string(d);
        csv += "\n";
    }
    write_text(dir / "human.csv", csv);
    const auto rows = json_out(run_mmeval({"leaderboard", (dir / "human.csv").string(), "--json"}));
    ASSERT_EQ(rows.size(), t2i_human_rows().size());
    std::map<std::string, double> published;
    for (const auto& r : t2i_human_rows()) published[r.model] = r.weighted;
    for (const auto& row : rows) {
        const long got = std::lround(row.at("weighted").get<double>() * 100);
        const long want = std::lround(published.at(row.at("model").get<std::string>()) * 100);
        EXPECT_LE(std::labs(got - want), 1) << row.at("model");
    }
    const auto bad = run_mmeval({"leaderboard", (dir / "human.csv").string(), "--weights", "1,2"});
    EXPECT_EQ(bad.exit_code, 2);
    const auto skewed = json_out(run_mmeval({"leaderboard", (dir / "human.csv").string(), "--weights", "0,0,0,1",
                                             "--json"}));
    for (const auto& row : skewed) EXPECT_NEAR(row.at("weighted").get<double>(), row.at("safety").get<double>(), 0.005);
}

TEST(Cli, LeaderboardFromScoreTable) {
    TempDir dir;
    write_text(dir / "ann.csv",
               "dataset,language,capabilities\nd1,EN,Vis\nd2,EN,Text;Vis\nd3,ZH,Math\n");
    write_text(dir / "scores.csv",
               "model,dataset,score\n"
               "a,d1,0.9\na,d2,0.5\na,d3,0.7\n"
               "b,d1,0.8\nb,d2,0.6\nb,d3,0.7\n"
               "c,d1,0.1\nc,d2,0.2\nc,d3,\n");
    const auto rows = json_out(run_mmeval({"leaderboard", (dir / "scores.csv").string(), "--annotations",
                                           (dir / "ann.csv").string(), "--json"}));
    ASSERT_EQ(rows.size(), 3u);
    std::map<std::string, Json> by;
    for (const auto& r : rows) by[r.at("model")] = r;
    // d1: a1 b2 c3; d2: b1 a2 c3; d3: a,b tie at 1 and c ranks last.
    EXPECT_DOUBLE_EQ(by["a"].at("en_avg_rank").get<double>(), 1.5);
    EXPECT_DOUBLE_EQ(by["b"].at("en_avg_rank").get<double>(), 1.5);
    EXPECT_DOUBLE_EQ(by["c"].at("en_avg_rank").get<double>(), 3.0);
    // CSV scores keep their own scale.
    EXPECT_NEAR(by["a"].at("capability_scores").at("Vis").get<double>(), 0.7, 1e-12);
    EXPECT_NEAR(by["a"].at("capability_scores").at("Text").get<double>(), 0.5, 1e-12);
    EXPECT_NEAR(by["c"].at("capability_scores").at("Vis").get<double>(), 0.15, 1e-12);
    EXPECT_FALSE(by["c"].at("capability_scores").contains("Math"));
    EXPECT_DOUBLE_EQ(by["c"].at("zh_avg_rank").get<double>(), 3.0);

    EXPECT_EQ(run_mmeval({"leaderboard", (dir / "scores.csv").string()}).exit_code, 2);
    EXPECT_EQ(run_mmeval({"leaderboard", (dir / "nothing-*.json").string()}).exit_code, 1);
}

TEST(Cli, LeaderboardFromReports) {
    Served s(10, 26);
    json_out(run_mmeval({"task", "add", s.fx.config_file.string(), "--server", s.url(), "--json"}));
    for (const auto& [model, correct] : std::vector<std::pair<std::string, std::size_t>>{{"strong", 9}, {"weak", 3}}) {
        const auto adapter = write_scripted_adapter(s.work / (model + ".json"), answers_with_accuracy(s.fx, correct));
        json_out(run_mmeval({"run", "--server", s.url(), "--task", "mc", "--model-id", model, "--adapter-config",
                             adapter.string(), "--no-cache", "--json"}));
        const auto r = run_mmeval({"finalize", "--server", s.url(), "--task", "mc", "--model-id", model, "--json"});
        ASSERT_EQ(r.exit_code, 0);
        write_text(s.work / ("report-" + model + ".json"), r.out);
    }
    const auto rows = json_out(run_mmeval({"leaderboard", (s.work / "report-*.json").string(), "--json"}));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].at("model"), "strong");
    EXPECT_DOUBLE_EQ(rows[0].at("overall_avg_rank").get<double>(), 1.0);
    EXPECT_DOUBLE_EQ(rows[1].at("overall_avg_rank").get<double>(), 2.0);
    EXPECT_NEAR(rows[0].at("capability_scores").at("Vis").get<double>(), 90.0, 1e-9);
}

TEST(Cli, AnnotationExportAndReport) {
    TempDir src, root, work;
    std::string prompts;
    for (int i = 0; i < 2; ++i) prompts += "a drawing of thing " + std::to_string(i) + "\n";
    write_text(src / "prompts.txt", prompts);
    write_text(src / "gen.json", Json{{"task_id", "gen"},
                                      {"dataset_path", "prompts.txt"},
                                      {"processed_dataset_path", "gen"},
                                      {"processor", "prompt_list"},
                                      {"task_type", "T2I"},
                                      {"metric_specs", {"human_binary"}}}
                                     .dump());
    ServeProcess proc(root.path(), free_port());
    ASSERT_TRUE(proc.wait_ready());
    json_out(run_mmeval({"task", "add", (src / "gen.json").string(), "--server", proc.url(), "--json"}));
    for (const char* model : {"painter", "sketcher"}) {
        write_text(work / "echo.json",
                   Json{{"backend_kind", "mock_echo"}, {"model_name", std::string(model) + "-backend"}}.dump());
        json_out(run_mmeval({"run", "--server", proc.url(), "--task", "gen", "--model-id", model, "--adapter-config",
                             (work / "echo.json").string(), "--no-cache", "--json"}));
    }
    const auto session_file = work / "session.json";
    const auto exported = run_mmeval({"annotate", "export", "--server", proc.url(), "--task", "gen", "--annotators",
                                      "u1,u2,u3", "--seed", "5", "-o", session_file.string()});
    ASSERT_EQ(exported.exit_code, 0) << exported.err;
    const auto session = parse_json(mmeval::read_file(session_file)).get<AnnotationSession>();
    ASSERT_EQ(session.entries.size(), 2u);

    const auto blind = json_out(run_mmeval({"annotate", "export", "--server", proc.url(), "--session",
                                            session.session_id, "--annotator", "u1"}));
    EXPECT_EQ(blind.dump().find("painter"), std::string::npos);

    httplib::Client c("127.0.0.1", std::stoi(proc.url().substr(proc.url().rfind(':') + 1)));
    std::mt19937 rng(8);
    std::map<std::pair<std::string, std::string>, std::vector<int>> values;
    for (int round = 1; round <= 3; ++round) {
        for (const char* dim : {"consistency", "realism", "aesthetics", "safety"}) {
            for (const auto& e : session.entries) {
                for (const auto& slot : e.slots) {
                    const int v = std::string(dim) == "safety" ? int(rng() % 2) : 1 + int(rng() % 5);
                    Json body{{"session_id", session.session_id}, {"annotator_id", "u2"}, {"round", round},
                              {"prompt_id", e.prompt_id}, {"slot", slot.position}, {"dimension", dim}, {"value", v}};
                    auto r = c.Post("/annotation/scores", body.dump(), "application/json");
                    ASSERT_TRUE(r);
                    ASSERT_EQ(r->status, 200) << r->body;
                    values[{slot.model_id, dim}].push_back(v);
                }
            }
        }
    }
    const auto not_closed = run_mmeval({"annotate", "report", "--server", proc.url(), "--session", session.session_id});
    EXPECT_EQ(not_closed.exit_code, 1);
    EXPECT_NE(not_closed.err.find("SESSION_NOT_CLOSED"), std::string::npos);

    const auto report = json_out(run_mmeval({"annotate", "report", "--server", proc.url(), "--session",
                                             session.session_id, "--close", "--json"}));
    const std::array<const char*, 4> dims{"consistency", "realism", "aesthetics", "safety"};
    const std::array<double, 4> weights{0.5, 0.2, 0.2, 0.1};
    for (const auto& row : report.at("weighted")) {
        const std::string model = row.at("model");
        double expected = 0.0;
        for (std::size_t d = 0; d < 4; ++d) {
            const auto& v = values.at({model, dims[d]});
            double mean = 0.0;
            for (int x : v) mean += x;
            mean /= static_cast<double>(v.size());
            const double norm = d == 3 ? mean * 100.0 : (mean - 1.0) / 4.0 * 100.0;
            EXPECT_NEAR(row.at(dims[d]).get<double>(), norm, 1e-9);
            expected += weights[d] * norm;
        }
        EXPECT_NEAR(row.at("weighted").get<double>(), std::round(expected * 100.0) / 100.0, 1e-9) << model;
    }
    const auto text = run_mmeval({"annotate", "report", "--server", proc.url(), "--session", session.session_id});
    EXPECT_EQ(text.exit_code, 0);
    EXPECT_NE(text.out.find("stability"), std::string::npos);
}
