#pragma once

#include <sys/types.h>

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "mmeval/dataset.hpp"
#include "mmeval/eval_server.hpp"
#include "mmeval/http_service.hpp"

namespace mmeval::test {

namespace fs = std::filesystem;

fs::path data_dir();

class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

void write_text(const fs::path& file, const std::string& content);

// A synthetic multiple-choice task with four options per row, written as a
// csv_vqa source plus one image per row.
struct McFixture {
    TaskConfig config;
    fs::path config_file;
    std::vector<std::string> question_ids;
    std::map<std::string, std::string> truth;                       // question_id -> label
    std::map<std::string, std::vector<ChoiceOption>> options;       // question_id -> options
};

McFixture make_mc_fixture(const fs::path& dir, const std::string& task_id, int n, std::uint64_t seed);

// Writes a scripted adapter answering each question with the given text.
fs::path write_scripted_adapter(const fs::path& file, const std::map<std::string, std::string>& answers,
                                double latency_ms = 0.0);

// EvalServer plus HttpService on a loopback port.
class LiveServer {
public:
    explicit LiveServer(const fs::path& root);
    ~LiveServer();

    EvalServer& server() { return *server_; }
    std::string url() const;
    int port() const { return port_; }
    void stop();

private:
    std::unique_ptr<EvalServer> server_;
    std::unique_ptr<HttpService> http_;
    int port_ = 0;
};

struct ProcessResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

// Runs the mmeval binary to completion.
ProcessResult run_mmeval(const std::vector<std::string>& args, const std::map<std::string, std::string>& env = {});

// A background `mmeval serve` child.
class ServeProcess {
public:
    ServeProcess(const fs::path& data_root, int port);
    ~ServeProcess();

    // Waits until GET /health answers; false on timeout or early exit.
    bool wait_ready(int timeout_ms = 10000);
    void kill_hard();
    // SIGTERM and wait; returns the exit status.
    int terminate();
    std::string url() const;
    pid_t pid() const { return pid_; }

private:
    pid_t pid_ = -1;
    int port_;
};

int free_port();

}  // namespace mmeval::test
