#include "mmeval/cli.hpp"

#include <CLI11.hpp>
#include <pthread.h>
#include <signal.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include "mmeval/eval_server.hpp"
#include "mmeval/http_service.hpp"
#include "mmeval/leaderboard_io.hpp"
#include "mmeval/runner.hpp"
#include "mmeval/server_client.hpp"

namespace fs = std::filesystem;

namespace mmeval {

namespace {

constexpr int kOk = 0;
constexpr int kDomainError = 1;
constexpr int kUsageError = 2;

// Thrown for bad flag combinations detected after parsing.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? v : fallback;
}

void print_json(const Json& j) { std::cout << j.dump(2) << "\n"; }

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : text) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (!std::isspace(static_cast<unsigned char>(c))) {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

HumanWeights parse_weights(const std::string& text) {
    const auto parts = split_list(text);
    if (parts.size() != 4) throw UsageError("--weights needs four comma-separated numbers");
    HumanWeights w;
    for (std::size_t i = 0; i < 4; ++i) w.values[i] = std::stod(parts[i]);
    w.validate();
    return w;
}

void write_or_print(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f.flush()) throw std::runtime_error("cannot write " + path);
}

// ---------------------------------------------------------------- serve

struct ServeArgs {
    std::string bind;
    std::string data_root;
    int threads = 16;
};

int serve(const ServeArgs& args) {
    const auto [host, port] = parse_bind_address(args.bind);
    EvalServer server(args.data_root);
    HttpService service(server, args.threads);
    const int bound = service.bind(host, port);

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);
    std::thread waiter([&] {
        int sig = 0;
        sigwait(&signals, &sig);
        service.stop();
    });

    std::cout << "serving http://" << host << ":" << bound << " data_root=" << fs::absolute(args.data_root).string()
              << std::endl;
    service.listen();
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
    std::cout << "stopped" << std::endl;
    return kOk;
}

// ---------------------------------------------------------------- task

struct TaskArgs {
    std::string config_file;
    std::string server;
    std::string data_root;
    bool defer = false;
    bool json = false;
};

int task_add(const TaskArgs& args) {
    if (args.server.empty() == args.data_root.empty()) throw UsageError("give exactly one of --server or --data-root");
    const TaskConfig config = load_task_config(args.config_file);
    TaskDescriptor d;
    if (!args.server.empty()) {
        ServerClient client(args.server);
        d = client.register_task(config, !args.defer);
    } else {
        EvalServer server(args.data_root);
        d = server.register_task(config, !args.defer);
    }
    if (args.json) {
        print_json(Json(d));
    } else {
        std::cout << "registered " << d.task_id << " (" << to_string(d.task_type) << ")\n";
    }
    return kOk;
}

int task_list(const TaskArgs& args) {
    ServerClient client(args.server);
    const auto tasks = client.get_tasks();
    if (args.json) {
        print_json(Json(tasks));
    } else {
        for (const auto& t : tasks) std::cout << t.task_id << "\t" << to_string(t.task_type) << "\t" << t.display_name << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------- run

struct RunArgs {
    RunnerConfig config;
    std::string adapter_config;
    std::string shard = "0/1";
    bool no_cache = false;
    int prefetch = 0;
    bool json = false;
};

int run(RunArgs& args) {
    auto& cfg = args.config;
    std::tie(cfg.shard_index, cfg.shard_count) = parse_shard(args.shard);
    cfg.cache_enabled = !args.no_cache;
    cfg.prefetch_depth = args.prefetch > 0 ? args.prefetch : 2 * cfg.concurrency;
    const AdapterSpec adapter = load_adapter_spec(args.adapter_config);
    const RunSummary s = run_task(cfg, adapter);
    if (args.json) {
        print_json(summary_json(s));
    } else {
        std::cout << "samples=" << s.samples << " answered=" << s.answered << " cache_hits=" << s.cache_hits
                  << " backend_calls=" << s.backend_calls << " failures=" << s.failures << "\n";
    }
    if (s.aborted) {
        std::cerr << "error: run aborted: " << s.abort_reason << "\n";
        return kDomainError;
    }
    return kOk;
}

// ---------------------------------------------------------------- finalize

struct FinalizeArgs {
    std::string server;
    std::string task;
    std::string model;
    bool json = false;
};

int finalize(const FinalizeArgs& args) {
    ServerClient client(args.server);
    const EvaluationReport r = client.finalize(args.task, args.model);
    if (args.json) {
        print_json(Json(r));
        return kOk;
    }
    std::cout << r.task_id << " " << r.model_id << " answered=" << r.num_answered << "/" << r.num_samples << "\n";
    for (const auto& m : r.metrics) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f", m.value);
        std::cout << "  " << to_string(m.metric_id) << " = " << buf << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------- leaderboard

struct LeaderboardArgs {
    std::vector<std::string> inputs;
    std::string annotations;
    std::string format = "both";
    std::string weights;
    std::string output;
    std::size_t n_en = 10;
    std::size_t n_zh = 4;
    bool json = false;
};

std::string combine(const std::string& format, const std::string& csv, const std::string& md) {
    if (format == "csv") return csv;
    if (format == "md") return md;
    return csv + "\n" + md;
}

int leaderboard(const LeaderboardArgs& args) {
    std::map<std::string, DatasetAnnotation> annotations;
    if (!args.annotations.empty()) annotations = read_annotations(args.annotations);

    std::vector<fs::path> reports;
    std::vector<fs::path> csvs;
    for (const auto& in : args.inputs) {
        for (const auto& p : expand_glob(in)) (p.extension() == ".json" ? reports : csvs).push_back(p);
    }
    if (reports.empty() && csvs.empty()) throw EvalError(ErrorCode::NO_SUBMISSIONS, "no leaderboard inputs matched");
    if (!reports.empty() && !csvs.empty()) throw UsageError("mix of report JSON and CSV inputs");
    if (csvs.size() > 1) throw UsageError("give a single CSV input");

    std::string text;
    Json json;
    if (!reports.empty()) {
        const auto rows = average_ranks(score_table_from_reports(reports, annotations));
        text = combine(args.format, render_rank_csv(rows), render_rank_markdown(rows));
        json = rank_rows_json(rows);
    } else {
        const CsvTable table = read_csv_table(csvs.front());
        switch (detect_input(table)) {
            case LeaderboardInput::scores: {
                if (annotations.empty()) throw UsageError("score CSV input needs --annotations");
                const auto rows = average_ranks(score_table_from_csv(table, annotations));
                text = combine(args.format, render_rank_csv(rows), render_rank_markdown(rows));
                json = rank_rows_json(rows);
                break;
            }
            case LeaderboardInput::language_ranks: {
                const auto rows = rows_from_language_ranks(language_ranks_from_csv(table), args.n_en, args.n_zh);
                text = combine(args.format, render_rank_csv(rows), render_rank_markdown(rows));
                json = rank_rows_json(rows);
                break;
            }
            case LeaderboardInput::human: {
                const HumanWeights w = args.weights.empty() ? HumanWeights{} : parse_weights(args.weights);
                const auto rows = weighted_rows_from_csv(table, w);
                text = combine(args.format, render_weighted_csv(rows), render_weighted_markdown(rows));
                json = weighted_rows_json(rows);
                break;
            }
        }
    }
    if (args.json) {
        write_or_print(args.output, json.dump(2) + "\n");
    } else {
        write_or_print(args.output, text);
    }
    return kOk;
}

// ---------------------------------------------------------------- annotate

struct AnnotateArgs {
    std::string server;
    std::string task;
    std::string session;
    std::string annotator;
    std::string annotators;
    std::string models;
    std::string output;
    std::string weights;
    std::uint64_t seed = 0;
    bool ungated = false;
    bool close = false;
    bool json = false;
};

int annotate_export(const AnnotateArgs& args) {
    ServerClient client(args.server);
    Json out;
    if (!args.session.empty()) {
        std::string path = "/annotation/sessions/" + url_encode(args.session);
        if (!args.annotator.empty()) path += "?annotator=" + url_encode(args.annotator);
        out = client.get_json(path);
    } else {
        if (args.task.empty()) throw UsageError("give --session or --task");
        Json body{{"task_id", args.task},
                  {"annotators", split_list(args.annotators)},
                  {"seed", args.seed},
                  {"gated", !args.ungated}};
        if (!args.models.empty()) body["models"] = split_list(args.models);
        out = client.post_json("/annotation/sessions", body);
    }
    write_or_print(args.output, out.dump(2) + "\n");
    if (!args.output.empty() && args.output != "-") {
        std::cerr << "wrote session " << out.value("session_id", "") << " to " << args.output << "\n";
    }
    return kOk;
}

int annotate_report(const AnnotateArgs& args) {
    ServerClient client(args.server);
    const std::string base = "/annotation/sessions/" + url_encode(args.session);
    if (args.close) client.post_json(base + "/close", Json::object());
    Json report = client.get_json(base + "/report");
    const HumanWeights w = args.weights.empty() ? HumanWeights{} : parse_weights(args.weights);

    std::vector<WeightedRow> rows;
    for (const auto& [model, dims] : report.at("models").items()) {
        auto norm = [&](const char* d) { return dims.contains(d) ? dims[d].at("normalized").get<double>() : 0.0; };
        WeightedRow row{model, {norm("consistency"), norm("realism"), norm("aesthetics"), norm("safety")}, 0.0};
        row.weighted = weighted_human_score(row.dims, w);
        rows.push_back(row);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.weighted > b.weighted; });

    if (args.json) {
        report["weighted"] = weighted_rows_json(rows);
        print_json(report);
        return kOk;
    }
    std::cout << render_weighted_markdown(rows);
    std::cout << "\nround-to-round stability (mean absolute difference):\n";
    for (const auto& [dim, v] : report.at("stability").items()) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f", v.get<double>());
        std::cout << "  " << dim << " " << buf << "\n";
    }
    return kOk;
}

}  // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"Multimodal model evaluation: server, runner and leaderboards", "mmeval"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "mmeval 1.0.0");

    ServeArgs serve_args;
    serve_args.bind = env_or("MMEVAL_BIND", "127.0.0.1:8080");
    serve_args.data_root = env_or("MMEVAL_DATA_ROOT", "mmeval-data");
    auto* serve_cmd = app.add_subcommand("serve", "Run the evaluation server");
    serve_cmd->add_option("--bind", serve_args.bind, "host:port to listen on (env MMEVAL_BIND)")->capture_default_str();
    serve_cmd->add_option("--data-root", serve_args.data_root, "State directory (env MMEVAL_DATA_ROOT)")
        ->capture_default_str();
    serve_cmd->add_option("--threads", serve_args.threads, "Request worker threads")->check(CLI::PositiveNumber);

    TaskArgs task_args;
    auto* task_cmd = app.add_subcommand("task", "Manage tasks");
    task_cmd->require_subcommand(1);
    auto* task_add_cmd = task_cmd->add_subcommand("add", "Register a task from a config file");
    task_add_cmd->add_option("config", task_args.config_file, "Task config (JSON)")->required()->check(CLI::ExistingFile);
    task_add_cmd->add_option("--server", task_args.server, "Server URL");
    task_add_cmd->add_option("--data-root", task_args.data_root, "Register directly into a data root");
    task_add_cmd->add_flag("--defer", task_args.defer, "Register without processing the dataset");
    task_add_cmd->add_flag("--json", task_args.json, "Print JSON");
    auto* task_list_cmd = task_cmd->add_subcommand("list", "List registered tasks");
    task_list_cmd->add_option("--server", task_args.server, "Server URL")->required();
    task_list_cmd->add_flag("--json", task_args.json, "Print JSON");

    RunArgs run_args;
    auto* run_cmd = app.add_subcommand("run", "Run a model over a task");
    run_cmd->add_option("--server", run_args.config.server_url, "Server URL")->required();
    run_cmd->add_option("--task", run_args.config.task_id, "Task id")->required();
    run_cmd->add_option("--model-id", run_args.config.model_id, "Model id recorded with predictions")->required();
    run_cmd->add_option("--adapter-config", run_args.adapter_config, "Adapter config (JSON)")
        ->required()
        ->check(CLI::ExistingFile);
    run_cmd->add_option("--concurrency", run_args.config.concurrency, "Backend calls in flight")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    run_cmd->add_option("--prefetch", run_args.prefetch, "Samples fetched ahead (default 2x concurrency)");
    run_cmd->add_flag("--no-cache", run_args.no_cache, "Disable the result cache");
    run_cmd->add_option("--cache-path", run_args.config.cache_path, "Cache file")->capture_default_str();
    run_cmd->add_option("--shard", run_args.shard, "Contiguous shard i/n of the index range")->capture_default_str();
    run_cmd->add_option("--max-attempts", run_args.config.retry.max_attempts, "Attempts per backend call")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
    run_cmd->add_option("--backoff-ms", run_args.config.retry.base_backoff_ms, "Initial retry backoff")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    run_cmd->add_flag("--json", run_args.json, "Print JSON summary");

    FinalizeArgs fin_args;
    auto* fin_cmd = app.add_subcommand("finalize", "Score a model's submissions");
    fin_cmd->add_option("--server", fin_args.server, "Server URL")->required();
    fin_cmd->add_option("--task", fin_args.task, "Task id")->required();
    fin_cmd->add_option("--model-id", fin_args.model, "Model id")->required();
    fin_cmd->add_flag("--json", fin_args.json, "Print the report JSON");

    LeaderboardArgs lb_args;
    auto* lb_cmd = app.add_subcommand("leaderboard", "Aggregate reports or CSV tables into a leaderboard");
    lb_cmd->add_option("inputs", lb_args.inputs, "Report JSON files/globs or one CSV")->required();
    lb_cmd->add_option("--annotations", lb_args.annotations, "Dataset annotations CSV")->check(CLI::ExistingFile);
    lb_cmd->add_option("--format", lb_args.format, "csv, md or both")
        ->check(CLI::IsMember({"csv", "md", "both"}))
        ->capture_default_str();
    lb_cmd->add_option("--weights", lb_args.weights, "Human-score weights w1,w2,w3,w4");
    lb_cmd->add_option("--n-en", lb_args.n_en, "English dataset count for rank inputs")->capture_default_str();
    lb_cmd->add_option("--n-zh", lb_args.n_zh, "Chinese dataset count for rank inputs")->capture_default_str();
    lb_cmd->add_option("-o,--output", lb_args.output, "Write to a file instead of stdout");
    lb_cmd->add_flag("--json", lb_args.json, "Print JSON");

    AnnotateArgs ann_args;
    auto* ann_cmd = app.add_subcommand("annotate", "Human annotation sessions");
    ann_cmd->require_subcommand(1);
    auto* ann_export = ann_cmd->add_subcommand("export", "Create a session from a task, or export one");
    ann_export->add_option("--server", ann_args.server, "Server URL")->required();
    ann_export->add_option("--task", ann_args.task, "Create a session over this task's artifacts");
    ann_export->add_option("--session", ann_args.session, "Export the blind view of an existing session");
    ann_export->add_option("--annotator", ann_args.annotator, "Include this annotator's scores in the blind view");
    ann_export->add_option("--annotators", ann_args.annotators, "Three comma-separated annotator ids");
    ann_export->add_option("--models", ann_args.models, "Comma-separated model ids (default: all submitted)");
    ann_export->add_option("--seed", ann_args.seed, "Layout seed")->capture_default_str();
    ann_export->add_flag("--ungated", ann_args.ungated, "Do not enforce dimension and round order");
    ann_export->add_option("-o,--output", ann_args.output, "Write to a file instead of stdout");
    auto* ann_report = ann_cmd->add_subcommand("report", "Summarize a closed session");
    ann_report->add_option("--server", ann_args.server, "Server URL")->required();
    ann_report->add_option("--session", ann_args.session, "Session id")->required();
    ann_report->add_flag("--close", ann_args.close, "Close the session first");
    ann_report->add_option("--weights", ann_args.weights, "Human-score weights w1,w2,w3,w4");
    ann_report->add_flag("--json", ann_args.json, "Print JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsageError;
    }

    try {
        if (*serve_cmd) return serve(serve_args);
        if (*task_add_cmd) return task_add(task_args);
        if (*task_list_cmd) return task_list(task_args);
        if (*run_cmd) return run(run_args);
        if (*fin_cmd) return finalize(fin_args);
        if (*lb_cmd) return leaderboard(lb_args);
        if (*ann_export) return annotate_export(ann_args);
        if (*ann_report) return annotate_report(ann_args);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kUsageError;
    } catch (const EvalError& e) {
        std::cerr << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
        return kDomainError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kDomainError;
    }
    return kUsageError;
}

}  // namespace mmeval
