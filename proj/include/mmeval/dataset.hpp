#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmeval/aggregation.hpp"
#include "mmeval/dataset_record.hpp"
#include "mmeval/metrics.hpp"
#include "mmeval/protocol.hpp"

namespace mmeval {

// A task's registration record. Field names follow the task-config files.
struct TaskConfig {
    std::string task_id;
    std::string display_name;
    std::string dataset_path;
    std::string split;
    std::string processed_dataset_path;
    std::string processor;
    std::string prompt_template;
    TaskType task_type = TaskType::VQA;
    std::vector<MetricSpec> metric_specs;
    std::vector<Capability> capability_tags;
    Language language = Language::EN;
    Json processor_params = Json::object();

    // Throws EvalError(INVALID_CONFIG) describing the first problem found.
    void validate() const;
    TaskDescriptor descriptor() const;
    bool operator==(const TaskConfig&) const = default;
};

// Missing prompt_template defaults to the short-answer instruction for text
// tasks and to empty for generation tasks.
void to_json(Json& j, const TaskConfig& v);
void from_json(const Json& j, TaskConfig& v);

// Loads a config file; a missing task_id defaults to the file stem and
// relative dataset_path entries are resolved against the file's directory.
TaskConfig load_task_config(const std::filesystem::path& file);

struct QualityIssue {
    std::string question_id;  // empty for file-level issues
    std::string problem;
};

class QualityCheckError : public EvalError {
public:
    explicit QualityCheckError(std::vector<QualityIssue> issues);
    const std::vector<QualityIssue>& issues() const { return issues_; }

private:
    std::vector<QualityIssue> issues_;
};

struct ProcessorContext {
    const TaskConfig& config;
    std::filesystem::path dataset_path;  // resolved
    std::filesystem::path media_root;    // media_refs are relative to this
};

using Processor = std::function<std::vector<DatasetRecord>(const ProcessorContext&)>;

// Named processors. Built in:
//   csv_vqa      question_id,question[,image][,A..Z][,answer][,question_type][,split]
//   jsonl        one record object per line (question or prompt, optional answer)
//   prompt_list  plain text, one generation prompt per line
//   command:<cmd> runs `<cmd> <dataset_path> <split>`, reading jsonl from stdout
class ProcessorRegistry {
public:
    ProcessorRegistry();

    void add(const std::string& id, Processor processor);
    bool contains(const std::string& id) const;
    const Processor& get(const std::string& id) const;

private:
    std::map<std::string, Processor> processors_;
};

std::filesystem::path media_root_for(const std::filesystem::path& dataset_path);

// Quality checks: unique non-empty ids, non-empty prompts, media present,
// sample invariants, ground truth for auto-scored metrics.
std::vector<QualityIssue> check_quality(const std::vector<DatasetRecord>& records, const TaskConfig& config,
                                        const std::filesystem::path& media_root);

struct ProcessedDataset {
    std::vector<DatasetRecord> records;
    TaskMeta meta;
    std::filesystem::path file;
    std::filesystem::path media_root;
};

// Runs the processor, checks quality and writes `data.jsonl` (one canonical
// record per line) under output_dir. Throws SOURCE_UNREADABLE,
// UNKNOWN_PROCESSOR or QualityCheckError.
ProcessedDataset run_processor(const TaskConfig& config, const std::filesystem::path& dataset_path,
                               const std::filesystem::path& output_dir, const ProcessorRegistry& registry);

std::vector<DatasetRecord> read_dataset_file(const std::filesystem::path& file);
std::string encode_dataset(const std::vector<DatasetRecord>& records);

TaskMeta make_meta(const TaskConfig& config, std::uint64_t num_samples);

}  // namespace mmeval
