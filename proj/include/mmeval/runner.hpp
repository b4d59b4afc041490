#pragma once

#include <filesystem>
#include <string>
#include <utility>

#include "mmeval/backend.hpp"
#include "mmeval/cache.hpp"

namespace mmeval {

struct RunnerConfig {
    std::string server_url;
    std::string task_id;
    std::string model_id;
    int concurrency = 1;
    int prefetch_depth = 2;
    RetryPolicy retry;
    std::filesystem::path cache_path = ".mmeval/cache.sqlite";
    bool cache_enabled = true;
    int shard_index = 0;
    int shard_count = 1;

    // Throws EvalError(INVALID_CONFIG).
    void validate() const;
};

struct RunSummary {
    std::uint64_t samples = 0;  // indices in this shard
    std::uint64_t answered = 0;
    std::uint64_t cache_hits = 0;
    std::uint64_t backend_calls = 0;
    std::uint64_t failures = 0;
    bool aborted = false;
    std::string abort_reason;
    double wall_ms = 0.0;
};

Json summary_json(const RunSummary& s);

// "i/n" with 0 <= i < n.
std::pair<int, int> parse_shard(const std::string& text);
// Contiguous half-open index range of shard i of n.
std::pair<std::uint64_t, std::uint64_t> shard_range(std::uint64_t num_samples, int index, int count);

// Fetches samples ahead of a pool of `concurrency` workers, consults the
// cache before each backend call and submits results as they complete.
// Terminal per-sample failures are submitted as failure records; losing the
// server aborts the run.
RunSummary run_task(const RunnerConfig& config, const AdapterSpec& adapter);
RunSummary run_task(const RunnerConfig& config, const AdapterSpec& adapter, Backend& backend, ResultCache* cache);

}  // namespace mmeval
