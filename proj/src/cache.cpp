#include "mmeval/cache.hpp"

#include <sqlite3.h>

#include <stdexcept>

#include "mmeval/hashing.hpp"
#include "mmeval/report.hpp"

namespace mmeval {

namespace {

class Statement {
public:
    Statement(sqlite3* db, const char* sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql, -1, &stmt_, nullptr) != SQLITE_OK) {
            throw std::runtime_error(std::string("cache: ") + sqlite3_errmsg(db));
        }
    }
    ~Statement() { sqlite3_finalize(stmt_); }

    void bind(int i, const std::string& text) {
        sqlite3_bind_text(stmt_, i, text.data(), static_cast<int>(text.size()), SQLITE_TRANSIENT);
    }
    void bind_blob(int i, const std::string& bytes) {
        sqlite3_bind_blob(stmt_, i, bytes.data(), static_cast<int>(bytes.size()), SQLITE_TRANSIENT);
    }
    bool step() {
        const int rc = sqlite3_step(stmt_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw std::runtime_error(std::string("cache: ") + sqlite3_errmsg(db_));
    }
    std::string column(int i) {
        const auto* p = reinterpret_cast<const char*>(sqlite3_column_blob(stmt_, i));
        return p ? std::string(p, static_cast<std::size_t>(sqlite3_column_bytes(stmt_, i))) : std::string();
    }
    std::int64_t integer(int i) { return sqlite3_column_int64(stmt_, i); }

private:
    sqlite3* db_;
    sqlite3_stmt* stmt_ = nullptr;
};

}  // namespace

ResultCache::ResultCache(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    if (sqlite3_open_v2(path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE | SQLITE_OPEN_FULLMUTEX,
                        nullptr) != SQLITE_OK) {
        const std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        throw std::runtime_error("cannot open cache " + path.string() + ": " + msg);
    }
    try {
        exec("PRAGMA locking_mode=EXCLUSIVE");
        exec("PRAGMA journal_mode=WAL");
        exec("PRAGMA synchronous=NORMAL");
        exec("BEGIN EXCLUSIVE");
        exec("CREATE TABLE IF NOT EXISTS cache ("
             " key TEXT PRIMARY KEY,"
             " value BLOB NOT NULL,"
             " checksum TEXT NOT NULL,"
             " created_at TEXT NOT NULL,"
             " model_name TEXT NOT NULL)");
        exec("COMMIT");
    } catch (const std::exception& e) {
        sqlite3_close(db_);
        db_ = nullptr;
        throw std::runtime_error("cache " + path.string() + " is unavailable (in use by another process?): " +
                                 e.what());
    }
}

ResultCache::~ResultCache() { sqlite3_close(db_); }

void ResultCache::exec(const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db_, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : sqlite3_errmsg(db_);
        sqlite3_free(err);
        throw std::runtime_error(msg);
    }
}

std::optional<CacheEntry> ResultCache::get(const std::string& key) {
    std::lock_guard lock(mutex_);
    Statement q(db_, "SELECT value, checksum, created_at, model_name FROM cache WHERE key = ?1");
    q.bind(1, key);
    if (!q.step()) return std::nullopt;
    CacheEntry entry{key, q.column(0), q.column(2), q.column(3)};
    if (sha256_hex(entry.value) != q.column(1)) {
        Statement del(db_, "DELETE FROM cache WHERE key = ?1");
        del.bind(1, key);
        del.step();
        return std::nullopt;
    }
    return entry;
}

void ResultCache::put(const std::string& key, const std::string& value, const std::string& model_name) {
    std::lock_guard lock(mutex_);
    Statement q(db_,
                "INSERT OR REPLACE INTO cache (key, value, checksum, created_at, model_name)"
                " VALUES (?1, ?2, ?3, ?4, ?5)");
    q.bind(1, key);
    q.bind_blob(2, value);
    q.bind(3, sha256_hex(value));
    q.bind(4, utc_timestamp());
    q.bind(5, model_name);
    q.step();
}

void ResultCache::erase(const std::string& key) {
    std::lock_guard lock(mutex_);
    Statement q(db_, "DELETE FROM cache WHERE key = ?1");
    q.bind(1, key);
    q.step();
}

std::size_t ResultCache::size() {
    std::lock_guard lock(mutex_);
    Statement q(db_, "SELECT COUNT(*) FROM cache");
    q.step();
    return static_cast<std::size_t>(q.integer(0));
}

}  // namespace mmeval
