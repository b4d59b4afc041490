#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>

struct sqlite3;

namespace mmeval {

struct CacheEntry {
    std::string key;  // 64 hex digits
    std::string value;
    std::string created_at;
    std::string model_name;
};

// Single-file result cache. The file is locked for the lifetime of the
// object, so a second process opening it fails. Safe for concurrent use
// within one process.
class ResultCache {
public:
    explicit ResultCache(const std::filesystem::path& path);
    ~ResultCache();

    ResultCache(const ResultCache&) = delete;
    ResultCache& operator=(const ResultCache&) = delete;

    // A row whose checksum does not match its value is dropped and reported as a miss.
    std::optional<CacheEntry> get(const std::string& key);
    void put(const std::string& key, const std::string& value, const std::string& model_name);
    void erase(const std::string& key);
    std::size_t size();

    const std::filesystem::path& path() const { return path_; }

private:
    void exec(const char* sql);

    std::filesystem::path path_;
    std::mutex mutex_;
    sqlite3* db_ = nullptr;
};

}  // namespace mmeval
