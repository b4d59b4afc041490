#include "mmeval/submission_store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <set>

#include "mmeval/csv.hpp"

namespace fs = std::filesystem;

namespace mmeval {

std::string encode_path_component(const std::string& id) {
    static constexpr char kHex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : id) {
        if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
            (c == '.' && !out.empty())) {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(kHex[c >> 4]);
            out.push_back(kHex[c & 0xf]);
        }
    }
    return out;
}

std::string decode_path_component(const std::string& name) {
    std::string out;
    for (std::size_t i = 0; i < name.size(); ++i) {
        if (name[i] == '%' && i + 2 < name.size()) {
            out.push_back(static_cast<char>(std::stoi(name.substr(i + 1, 2), nullptr, 16)));
            i += 2;
        } else {
            out.push_back(name[i]);
        }
    }
    return out;
}

void write_file_atomic(const fs::path& path, std::string_view bytes) {
    fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!f.flush()) throw std::runtime_error("cannot write " + tmp.string());
    }
    fs::rename(tmp, path);
}

SubmissionStore::SubmissionStore(fs::path dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_ / "submissions");
    fs::create_directories(dir_ / "human");
    replay();
}

SubmissionStore::~SubmissionStore() {
    for (auto& [model, fd] : fds_) ::close(fd);
}

SubmissionStore::Outcome SubmissionStore::apply(PredictionMap& map, const PredictionRecord& record) {
    auto it = map.find(record.question_id);
    if (it == map.end()) {
        map.emplace(record.question_id, record);
        return Outcome::stored;
    }
    const PredictionRecord& existing = it->second;
    if (existing.same_outcome(record)) return Outcome::unchanged;
    if (existing.is_failure()) {
        it->second = record;
        return Outcome::stored;
    }
    if (record.is_failure()) return Outcome::ignored;
    throw EvalError(ErrorCode::DUPLICATE_SUBMISSION, "question " + record.question_id + " already has a different answer from model " +
                                                         record.model_id);
}

void SubmissionStore::replay() {
    for (const auto& entry : fs::directory_iterator(dir_ / "submissions")) {
        if (entry.path().extension() != ".jsonl") continue;
        const std::string model = decode_path_component(entry.path().stem().string());
        auto& map = by_model_[model];
        const std::string text = read_file(entry.path());
        std::size_t start = 0;
        while (start < text.size()) {
            const auto end = text.find('\n', start);
            if (end == std::string::npos) break;  // torn final write; never acknowledged
            const std::string_view line(text.data() + start, end - start);
            start = end + 1;
            if (line.empty()) continue;
            try {
                apply(map, decode<PredictionRecord>(parse_json(line)));
            } catch (const EvalError&) {
                // Log entries were validated when written; skip anything unreadable.
            }
        }
        if (start < text.size()) {
            // Drop the torn tail so later appends start on a clean line.
            fs::resize_file(entry.path(), start);
        }
    }
}

int SubmissionStore::log_fd(const std::string& model_id) {
    auto it = fds_.find(model_id);
    if (it != fds_.end()) return it->second;
    const fs::path path = dir_ / "submissions" / (encode_path_component(model_id) + ".jsonl");
    const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw std::runtime_error("cannot open " + path.string() + ": " + std::strerror(errno));
    fds_.emplace(model_id, fd);
    return fd;
}

SubmitAck SubmissionStore::submit(const PredictionRecord& record) {
    std::lock_guard lock(mutex_);
    auto& map = by_model_[record.model_id];
    PredictionMap trial = map.contains(record.question_id) ? PredictionMap{*map.find(record.question_id)} : PredictionMap{};
    const Outcome outcome = apply(trial, record);  // throws on conflict, leaving the store unchanged
    if (outcome == Outcome::stored) {
        std::string line = encode(record);
        line.push_back('\n');
        const int fd = log_fd(record.model_id);
        std::size_t written = 0;
        while (written < line.size()) {
            const auto n = ::write(fd, line.data() + written, line.size() - written);
            if (n < 0) {
                if (errno == EINTR) continue;
                throw std::runtime_error(std::string("submission log write failed: ") + std::strerror(errno));
            }
            written += static_cast<std::size_t>(n);
        }
        map[record.question_id] = record;
    }
    SubmitAck ack;
    for (const auto& [qid, p] : map) {
        ++ack.stored;
        if (!p.is_failure()) ++ack.answered;
    }
    return ack;
}

PredictionMap SubmissionStore::snapshot(const std::string& model_id) const {
    std::lock_guard lock(mutex_);
    auto it = by_model_.find(model_id);
    return it == by_model_.end() ? PredictionMap{} : it->second;
}

SubmitAck SubmissionStore::counts(const std::string& model_id) const {
    SubmitAck ack;
    for (const auto& [qid, p] : snapshot(model_id)) {
        ++ack.stored;
        if (!p.is_failure()) ++ack.answered;
    }
    return ack;
}

std::vector<std::string> SubmissionStore::models() const {
    std::lock_guard lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [model, map] : by_model_) {
        if (!map.empty()) out.push_back(model);
    }
    return out;
}

void SubmissionStore::set_human_judgments(const std::string& model_id, std::vector<HumanJudgment> judgments) {
    std::set<std::string> seen;
    for (const auto& j : judgments) {
        if (j.correct != 0 && j.correct != 1) {
            throw EvalError(ErrorCode::INVALID_SCORE, "human score for " + j.question_id + " must be 0 or 1");
        }
        if (!seen.insert(j.question_id).second) {
            throw EvalError(ErrorCode::INVALID_SCORE, "duplicate human score for " + j.question_id);
        }
    }
    std::lock_guard lock(mutex_);
    write_file_atomic(dir_ / "human" / (encode_path_component(model_id) + ".json"), canonicalize(Json(judgments)));
}

std::vector<HumanJudgment> SubmissionStore::human_judgments(const std::string& model_id) const {
    std::lock_guard lock(mutex_);
    const fs::path path = dir_ / "human" / (encode_path_component(model_id) + ".json");
    if (!fs::exists(path)) return {};
    return decode<std::vector<HumanJudgment>>(parse_json(read_file(path)));
}

}  // namespace mmeval
