#include "mmeval/runner.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <optional>
#include <thread>

#include "mmeval/protocol.hpp"
#include "mmeval/server_client.hpp"

namespace mmeval {

namespace {

struct WorkItem {
    SampleInfo sample;
    std::vector<MediaPayload> media;
};

template <typename T>
class BoundedQueue {
public:
    explicit BoundedQueue(std::size_t capacity) : capacity_(capacity) {}

    bool push(T item) {
        std::unique_lock lock(mutex_);
        not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
        if (closed_) return false;
        items_.push_back(std::move(item));
        not_empty_.notify_one();
        return true;
    }

    std::optional<T> pop() {
        std::unique_lock lock(mutex_);
        not_empty_.wait(lock, [&] { return finished_ || !items_.empty(); });
        if (items_.empty()) return std::nullopt;
        T item = std::move(items_.front());
        items_.pop_front();
        not_full_.notify_one();
        return item;
    }

    // No more pushes; consumers drain what is queued.
    void finish() {
        std::lock_guard lock(mutex_);
        finished_ = true;
        not_empty_.notify_all();
    }

    // Drops queued items and wakes everyone.
    void cancel() {
        std::lock_guard lock(mutex_);
        closed_ = finished_ = true;
        items_.clear();
        not_empty_.notify_all();
        not_full_.notify_all();
    }

private:
    std::size_t capacity_;
    std::mutex mutex_;
    std::condition_variable not_full_, not_empty_;
    std::deque<T> items_;
    bool finished_ = false;
    bool closed_ = false;
};

std::string extension_for(const std::string& mime) {
    if (mime == "image/png") return "png";
    if (mime == "image/jpeg") return "jpg";
    if (mime == "image/webp") return "webp";
    if (mime == "image/gif") return "gif";
    if (mime == "video/mp4") return "mp4";
    if (mime == "text/plain") return "txt";
    return "bin";
}

class Run {
public:
    Run(const RunnerConfig& config, const AdapterSpec& adapter, Backend& backend, ResultCache* cache)
        : config_(config), adapter_(adapter), backend_(backend), cache_(cache),
          queue_(static_cast<std::size_t>(config.prefetch_depth)) {}

    RunSummary execute() {
        const auto start = std::chrono::steady_clock::now();
        try {
            ServerClient client(config_.server_url);
            meta_ = client.get_meta(config_.task_id);
        } catch (const EvalError& e) {
            abort(e.what());
            summary_.wall_ms = since(start);
            return summary_;
        }
        const auto [begin, end] = shard_range(meta_.num_samples, config_.shard_index, config_.shard_count);
        summary_.samples = end - begin;

        std::thread fetcher([&, begin = begin, end = end] { fetch(begin, end); });
        std::vector<std::thread> workers;
        for (int i = 0; i < config_.concurrency; ++i) workers.emplace_back([&] { work(); });
        fetcher.join();
        for (auto& w : workers) w.join();

        summary_.answered = answered_;
        summary_.cache_hits = cache_hits_;
        summary_.backend_calls = backend_calls_;
        summary_.failures = failures_;
        summary_.wall_ms = since(start);
        return summary_;
    }

private:
    static double since(std::chrono::steady_clock::time_point t) {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t).count();
    }

    void abort(const std::string& reason) {
        std::lock_guard lock(summary_mutex_);
        if (!summary_.aborted) {
            summary_.aborted = true;
            summary_.abort_reason = reason;
        }
        stop_ = true;
        queue_.cancel();
    }

    void fetch(std::uint64_t begin, std::uint64_t end) {
        try {
            ServerClient client(config_.server_url);
            for (std::uint64_t i = begin; i < end && !stop_; ++i) {
                WorkItem item{client.get_data(config_.task_id, i), {}};
                for (const auto& ref : item.sample.media_refs) {
                    item.media.push_back({ref, mime_for(ref), client.media(config_.task_id, ref)});
                }
                if (!queue_.push(std::move(item))) break;
            }
            queue_.finish();
        } catch (const std::exception& e) {
            abort(e.what());
        }
    }

    void work() {
        try {
            ServerClient client(config_.server_url);
            while (auto item = queue_.pop()) {
                if (stop_) break;
                process(client, *item);
            }
        } catch (const std::exception& e) {
            abort(e.what());
        }
    }

    void process(ServerClient& client, const WorkItem& item) {
        const bool want_artifact = produces_artifacts(meta_.task_type);
        BackendRequest request{adapter_.model_name,     item.sample.prompt, item.media, adapter_.generation_params,
                               item.sample.question_id, want_artifact};
        PredictionRecord pred;
        pred.task_id = config_.task_id;
        pred.question_id = item.sample.question_id;
        pred.model_id = config_.model_id;

        const auto start = std::chrono::steady_clock::now();
        std::optional<BackendResponse> response;
        std::string failure;
        const std::string key = cache_key(request);
        if (cache_) {
            if (auto entry = cache_->get(key)) {
                try {
                    response = parse_json(entry->value).get<BackendResponse>();
                    pred.from_cache = true;
                    ++cache_hits_;
                } catch (const std::exception&) {
                    cache_->erase(key);
                }
            }
        }
        if (!response) {
            ++backend_calls_;
            try {
                response = backend_.call(request);
                if (want_artifact ? !response->has_artifact() : !response->answer) {
                    failure = want_artifact ? "backend returned no artifact" : "backend returned no answer";
                    response.reset();
                } else if (cache_) {
                    cache_->put(key, canonicalize(Json(*response)), adapter_.model_name);
                }
            } catch (const BackendFailure& e) {
                failure = e.what();
            }
        }
        pred.latency_ms = since(start);

        if (response && want_artifact && !response->has_artifact()) {
            failure = "cached response has no artifact";
            response.reset();
        }
        if (response) {
            pred.raw_response = response->raw_response;
            if (want_artifact) {
                pred.artifact_ref = client.upload_artifact(config_.task_id, config_.model_id, pred.question_id,
                                                           extension_for(response->artifact_mime),
                                                           response->artifact_bytes);
            } else {
                pred.answer = response->answer;
            }
        } else {
            pred.answer = "";
            pred.error = failure;
        }

        try {
            client.submit(pred);
        } catch (const EvalError& e) {
            if (e.code() == ErrorCode::SERVER_UNREACHABLE) throw;
            ++failures_;
            return;
        }
        if (pred.is_failure()) {
            ++failures_;
        } else {
            ++answered_;
        }
    }

    const RunnerConfig& config_;
    const AdapterSpec& adapter_;
    Backend& backend_;
    ResultCache* cache_;
    TaskMeta meta_;
    BoundedQueue<WorkItem> queue_;
    std::atomic<bool> stop_{false};
    std::atomic<std::uint64_t> answered_{0}, cache_hits_{0}, backend_calls_{0}, failures_{0};
    std::mutex summary_mutex_;
    RunSummary summary_;
};

}  // namespace

void RunnerConfig::validate() const {
    auto invalid = [](const std::string& m) { throw EvalError(ErrorCode::INVALID_CONFIG, m); };
    if (server_url.empty()) invalid("server_url is empty");
    if (task_id.empty()) invalid("task_id is empty");
    if (model_id.empty()) invalid("model_id is empty");
    if (concurrency < 1) invalid("concurrency must be positive");
    if (prefetch_depth < concurrency) invalid("prefetch_depth must be at least concurrency");
    if (retry.max_attempts < 1) invalid("max_attempts must be at least 1");
    if (retry.base_backoff_ms < 0) invalid("base_backoff_ms is negative");
    if (shard_count < 1 || shard_index < 0 || shard_index >= shard_count) invalid("shard must satisfy 0 <= i < n");
    if (cache_enabled && cache_path.empty()) invalid("cache_path is empty");
}

Json summary_json(const RunSummary& s) {
    Json j{{"samples", s.samples},     {"answered", s.answered}, {"cache_hits", s.cache_hits},
           {"backend_calls", s.backend_calls}, {"failures", s.failures}, {"aborted", s.aborted},
           {"wall_ms", s.wall_ms}};
    if (s.aborted) j["abort_reason"] = s.abort_reason;
    return j;
}

std::pair<int, int> parse_shard(const std::string& text) {
    const auto slash = text.find('/');
    int i = -1, n = 0;
    if (slash != std::string::npos) {
        auto r1 = std::from_chars(text.data(), text.data() + slash, i);
        auto r2 = std::from_chars(text.data() + slash + 1, text.data() + text.size(), n);
        if (r1.ec == std::errc() && r1.ptr == text.data() + slash && r2.ec == std::errc() &&
            r2.ptr == text.data() + text.size() && n >= 1 && i >= 0 && i < n) {
            return {i, n};
        }
    }
    throw EvalError(ErrorCode::INVALID_CONFIG, "shard must look like i/n with 0 <= i < n, got '" + text + "'");
}

std::pair<std::uint64_t, std::uint64_t> shard_range(std::uint64_t num_samples, int index, int count) {
    const auto i = static_cast<std::uint64_t>(index);
    const auto n = static_cast<std::uint64_t>(count);
    return {num_samples * i / n, num_samples * (i + 1) / n};
}

RunSummary run_task(const RunnerConfig& config, const AdapterSpec& adapter, Backend& backend, ResultCache* cache) {
    config.validate();
    Run run(config, adapter, backend, cache);
    return run.execute();
}

RunSummary run_task(const RunnerConfig& config, const AdapterSpec& adapter) {
    config.validate();
    auto backend = make_backend(adapter, config.retry);
    std::unique_ptr<ResultCache> cache;
    if (config.cache_enabled) cache = std::make_unique<ResultCache>(config.cache_path);
    return run_task(config, adapter, *backend, cache.get());
}

}  // namespace mmeval
