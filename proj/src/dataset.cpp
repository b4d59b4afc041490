#include "mmeval/dataset.hpp"
#include "mmeval/prompt.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "mmeval/csv.hpp"

namespace fs = std::filesystem;

namespace mmeval {

namespace {

bool is_safe_id(const std::string& id) {
    return !id.empty() && id != "." && id != ".." && std::all_of(id.begin(), id.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' ||
               c == '.';
    });
}

bool escapes_root(const fs::path& rel) {
    if (rel.is_absolute()) return true;
    return std::any_of(rel.begin(), rel.end(), [](const fs::path& part) { return part == ".."; });
}

std::string trim(std::string s) {
    s.erase(0, s.find_first_not_of(" \t\r\n"));
    s.erase(s.find_last_not_of(" \t\r\n") + 1);
    return s;
}

std::vector<std::string> split_media(const std::string& cell) {
    std::vector<std::string> out;
    std::stringstream ss(cell);
    std::string part;
    while (std::getline(ss, part, ';')) {
        part = trim(part);
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

QuestionType default_question_type(const TaskConfig& config, bool has_options) {
    if (produces_artifacts(config.task_type)) return QuestionType::generation;
    return has_options ? QuestionType::multiple_choice : QuestionType::open_ended;
}

[[noreturn]] void unreadable(const std::string& message) { throw EvalError(ErrorCode::SOURCE_UNREADABLE, message); }

fs::path source_file(const ProcessorContext& ctx, const char* extension) {
    if (fs::is_directory(ctx.dataset_path)) {
        const std::string name = ctx.config.split.empty() ? std::string("data") : ctx.config.split;
        return ctx.dataset_path / (name + extension);
    }
    return ctx.dataset_path;
}

std::string read_source(const fs::path& path) {
    try {
        return read_file(path);
    } catch (const std::exception& e) {
        unreadable(e.what());
    }
}

std::vector<DatasetRecord> process_csv(const ProcessorContext& ctx) {
    const fs::path file = source_file(ctx, ".csv");
    CsvTable table;
    try {
        table = parse_csv_table(read_source(file));
    } catch (const EvalError&) {
        throw;
    } catch (const std::exception& e) {
        unreadable(file.string() + ": " + e.what());
    }
    for (const char* col : {"question_id", "question"}) {
        if (!table.has_column(col)) throw QualityCheckError({{"", file.string() + " lacks column '" + col + "'"}});
    }
    std::vector<std::string> option_columns;
    for (const auto& h : table.header) {
        if (h.size() == 1 && h[0] >= 'A' && h[0] <= 'Z') option_columns.push_back(h);
    }
    const std::set<std::string> known{"question_id", "question", "image", "answer", "question_type", "split"};

    std::vector<DatasetRecord> records;
    for (const auto& row : table.rows) {
        if (table.has_column("split") && !ctx.config.split.empty() && row.at("split") != ctx.config.split) continue;
        DatasetRecord r;
        r.question_id = trim(row.at("question_id"));
        r.prompt = row.at("question");
        if (table.has_column("image")) r.media_refs = split_media(row.at("image"));
        std::vector<ChoiceOption> options;
        for (const auto& col : option_columns) {
            if (!row.at(col).empty()) options.push_back({col, row.at(col)});
        }
        if (!options.empty()) r.options = std::move(options);
        if (table.has_column("answer") && !trim(row.at("answer")).empty()) r.ground_truth = trim(row.at("answer"));
        if (table.has_column("question_type") && !row.at("question_type").empty()) {
            r.question_type = question_type_from_string(trim(row.at("question_type")));
        } else {
            r.question_type = default_question_type(ctx.config, r.options.has_value());
        }
        for (const auto& [col, value] : row) {
            const bool is_option = std::find(option_columns.begin(), option_columns.end(), col) != option_columns.end();
            if (!known.contains(col) && !is_option) r.metadata[col] = value;
        }
        records.push_back(std::move(r));
    }
    return records;
}

std::string json_id(const Json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number_integer() || v.is_number_unsigned()) return v.dump();
    throw std::runtime_error("question_id must be a string or integer");
}

std::vector<DatasetRecord> parse_jsonl_records(std::string_view text, const TaskConfig& config,
                                               const std::string& source) {
    std::vector<DatasetRecord> records;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string line = trim(std::string(text.substr(start, end - start)));
        start = end + 1;
        ++line_no;
        if (line.empty()) continue;
        try {
            const Json j = Json::parse(line);
            if (auto split = j.find("split");
                split != j.end() && !config.split.empty() && split->get<std::string>() != config.split) {
                continue;
            }
            DatasetRecord r;
            r.question_id = json_id(j.at("question_id"));
            r.prompt = j.contains("question") ? j.at("question").get<std::string>() : j.at("prompt").get<std::string>();
            for (const char* key : {"media_refs", "images", "image"}) {
                auto it = j.find(key);
                if (it == j.end() || it->is_null()) continue;
                if (it->is_string()) {
                    r.media_refs = split_media(it->get<std::string>());
                } else {
                    r.media_refs = it->get<std::vector<std::string>>();
                }
                break;
            }
            if (auto it = j.find("options"); it != j.end() && !it->is_null()) {
                std::vector<ChoiceOption> options;
                if (it->is_object()) {
                    for (auto o = it->begin(); o != it->end(); ++o) options.push_back({o.key(), o->get<std::string>()});
                } else {
                    options = it->get<std::vector<ChoiceOption>>();
                }
                if (!options.empty()) r.options = std::move(options);
            }
            for (const char* key : {"ground_truth", "answer"}) {
                auto it = j.find(key);
                if (it == j.end() || it->is_null()) continue;
                r.ground_truth = it->is_string() ? it->get<std::string>() : it->dump();
                break;
            }
            if (auto it = j.find("question_type"); it != j.end()) {
                r.question_type = question_type_from_string(it->get<std::string>());
            } else {
                r.question_type = default_question_type(config, r.options.has_value());
            }
            r.metadata = j.value("metadata", Json::object());
            records.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw QualityCheckError({{"", source + ":" + std::to_string(line_no) + ": " + e.what()}});
        }
    }
    return records;
}

std::vector<DatasetRecord> process_jsonl(const ProcessorContext& ctx) {
    const fs::path file = source_file(ctx, ".jsonl");
    return parse_jsonl_records(read_source(file), ctx.config, file.string());
}

std::vector<DatasetRecord> process_prompt_list(const ProcessorContext& ctx) {
    const fs::path file = source_file(ctx, ".txt");
    std::istringstream in(read_source(file));
    std::vector<DatasetRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        line = trim(line);
        if (line.empty()) continue;
        char id[32];
        std::snprintf(id, sizeof id, "p%04zu", records.size() + 1);
        DatasetRecord r;
        r.question_id = id;
        r.prompt = line;
        r.question_type = QuestionType::generation;
        records.push_back(std::move(r));
    }
    return records;
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out.push_back(c);
        }
    }
    return out + "'";
}

std::vector<DatasetRecord> process_command(const std::string& command, const ProcessorContext& ctx) {
    const std::string cmd = command + " " + shell_quote(ctx.dataset_path.string()) + " " + shell_quote(ctx.config.split);
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) unreadable("cannot start processor command: " + command);
    std::string output;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
    const int status = ::pclose(pipe);
    if (status == -1 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) {
        unreadable("processor command failed: " + command);
    }
    return parse_jsonl_records(output, ctx.config, command);
}

bool needs_ground_truth(const TaskConfig& config) {
    return std::any_of(config.metric_specs.begin(), config.metric_specs.end(), [](const MetricSpec& m) {
        return m.metric_id != MetricId::human_binary;
    });
}

bool uses_choices(const TaskConfig& config) {
    return std::any_of(config.metric_specs.begin(), config.metric_specs.end(),
                       [](const MetricSpec& m) { return m.metric_id == MetricId::choice_accuracy; });
}

}  // namespace

void TaskConfig::validate() const {
    auto invalid = [](const std::string& m) { throw EvalError(ErrorCode::INVALID_CONFIG, m); };
    if (!is_safe_id(task_id)) invalid("task_id '" + task_id + "' must be non-empty and use only [A-Za-z0-9._-]");
    if (dataset_path.empty()) invalid("dataset_path is empty");
    if (processed_dataset_path.empty()) invalid("processed_dataset_path is empty");
    if (escapes_root(processed_dataset_path) && !fs::path(processed_dataset_path).is_absolute()) {
        invalid("processed_dataset_path must not contain '..'");
    }
    if (processor.empty()) invalid("processor is empty");
    if (metric_specs.empty()) invalid("metric_specs is empty");
    for (const auto& m : metric_specs) m.validate();
    if (!produces_artifacts(task_type)) {
        if (capability_tags.empty()) invalid("capability_tags is empty for an understanding task");
        if (task_type == TaskType::VQA && prompt_template.empty()) invalid("prompt_template is empty for a VQA task");
    }
}

TaskDescriptor TaskConfig::descriptor() const {
    return TaskDescriptor{task_id, task_type, display_name.empty() ? task_id : display_name, kProtocolVersion};
}

void to_json(Json& j, const TaskConfig& v) {
    Json caps = Json::array();
    for (auto c : v.capability_tags) caps.push_back(to_string(c));
    j = Json{{"task_id", v.task_id},
             {"display_name", v.display_name},
             {"dataset_path", v.dataset_path},
             {"split", v.split},
             {"processed_dataset_path", v.processed_dataset_path},
             {"processor", v.processor},
             {"prompt_template", v.prompt_template},
             {"task_type", to_string(v.task_type)},
             {"metric_specs", v.metric_specs},
             {"capability_tags", caps},
             {"language", to_string(v.language)},
             {"processor_params", v.processor_params}};
}

void from_json(const Json& j, TaskConfig& v) {
    v.task_id = j.value("task_id", std::string{});
    v.display_name = j.value("display_name", std::string{});
    j.at("dataset_path").get_to(v.dataset_path);
    v.split = j.value("split", std::string{});
    j.at("processed_dataset_path").get_to(v.processed_dataset_path);
    j.at("processor").get_to(v.processor);
    v.task_type = task_type_from_string(j.value("task_type", std::string("VQA")));
    if (auto it = j.find("prompt_template"); it != j.end() && !it->is_null()) {
        v.prompt_template = it->get<std::string>();
    } else {
        v.prompt_template = produces_artifacts(v.task_type) ? "" : std::string(kDefaultPromptTemplate);
    }
    v.metric_specs = j.value("metric_specs", std::vector<MetricSpec>{});
    v.capability_tags.clear();
    try {
        for (const auto& c : j.value("capability_tags", std::vector<std::string>{})) {
            v.capability_tags.push_back(capability_from_string(c));
        }
        v.language = language_from_string(j.value("language", std::string("EN")));
    } catch (const std::invalid_argument& e) {
        throw EvalError(ErrorCode::INVALID_CONFIG, e.what());
    }
    v.processor_params = j.value("processor_params", Json::object());
}

TaskConfig load_task_config(const fs::path& file) {
    std::string text;
    try {
        text = read_file(file);
    } catch (const std::exception& e) {
        throw EvalError(ErrorCode::INVALID_CONFIG, e.what());
    }
    Json j = parse_json(text);
    TaskConfig config;
    try {
        config = j.get<TaskConfig>();
    } catch (const Json::exception& e) {
        throw EvalError(ErrorCode::INVALID_CONFIG, file.string() + ": " + e.what());
    }
    if (config.task_id.empty()) config.task_id = file.stem().string();
    fs::path dataset(config.dataset_path);
    if (!config.dataset_path.empty() && dataset.is_relative()) {
        config.dataset_path = fs::weakly_canonical(fs::absolute(file).parent_path() / dataset).string();
    }
    return config;
}

QualityCheckError::QualityCheckError(std::vector<QualityIssue> issues)
    : EvalError(ErrorCode::QUALITY_CHECK_FAILED,
                [&] {
                    std::string msg = "quality check failed with " + std::to_string(issues.size()) + " issue(s)";
                    std::size_t shown = 0;
                    for (const auto& i : issues) {
                        if (++shown > 20) {
                            msg += "; ...";
                            break;
                        }
                        msg += "; " + (i.question_id.empty() ? std::string() : i.question_id + ": ") + i.problem;
                    }
                    return msg;
                }()),
      issues_(std::move(issues)) {}

ProcessorRegistry::ProcessorRegistry() {
    add("csv_vqa", process_csv);
    add("jsonl", process_jsonl);
    add("prompt_list", process_prompt_list);
}

void ProcessorRegistry::add(const std::string& id, Processor processor) { processors_[id] = std::move(processor); }

bool ProcessorRegistry::contains(const std::string& id) const {
    return processors_.contains(id) || (id.starts_with("command:") && id.size() > 8);
}

const Processor& ProcessorRegistry::get(const std::string& id) const {
    auto it = processors_.find(id);
    if (it == processors_.end()) throw EvalError(ErrorCode::UNKNOWN_PROCESSOR, "unknown processor '" + id + "'");
    return it->second;
}

fs::path media_root_for(const fs::path& dataset_path) {
    return fs::is_directory(dataset_path) ? dataset_path : dataset_path.parent_path();
}

std::vector<QualityIssue> check_quality(const std::vector<DatasetRecord>& records, const TaskConfig& config,
                                        const fs::path& media_root) {
    std::vector<QualityIssue> issues;
    if (records.empty()) issues.push_back({"", "source produced no records"});
    const TaskMeta meta = make_meta(config, records.size());
    const bool want_truth = needs_ground_truth(config);
    const bool want_choices = uses_choices(config);
    std::set<std::string> seen;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        const std::string id = r.question_id.empty() ? "#" + std::to_string(i) : r.question_id;
        if (!r.question_id.empty() && !seen.insert(r.question_id).second) {
            issues.push_back({id, "duplicate question_id " + r.question_id});
        }
        if (trim(r.prompt).empty()) issues.push_back({id, "empty prompt"});
        for (const auto& media : r.media_refs) {
            if (escapes_root(media)) {
                issues.push_back({id, "media path '" + media + "' leaves the dataset directory"});
            } else if (!fs::is_regular_file(media_root / media)) {
                issues.push_back({id, "media file not found: " + media});
            }
        }
        SampleInfo sample{r.question_id, r.prompt, r.media_refs, r.question_type, r.options, i};
        for (const auto& v : validate_sample(sample, meta)) issues.push_back({id, v.detail});
        if (want_truth && !r.ground_truth) issues.push_back({id, "missing ground truth"});
        if (want_choices && r.ground_truth && r.options) {
            const bool known = std::any_of(r.options->begin(), r.options->end(),
                                           [&](const ChoiceOption& o) { return o.label == *r.ground_truth; });
            if (!known) issues.push_back({id, "ground truth '" + *r.ground_truth + "' is not an option label"});
        }
    }
    return issues;
}

std::string encode_dataset(const std::vector<DatasetRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += canonicalize(Json(r));
        out.push_back('\n');
    }
    return out;
}

std::vector<DatasetRecord> read_dataset_file(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw EvalError(ErrorCode::TASK_NOT_PROCESSED, "processed dataset missing: " + file.string());
    std::vector<DatasetRecord> records;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        records.push_back(decode<DatasetRecord>(parse_json(line)));
    }
    return records;
}

TaskMeta make_meta(const TaskConfig& config, std::uint64_t num_samples) {
    TaskMeta meta;
    meta.task_id = config.task_id;
    meta.num_samples = num_samples;
    meta.task_type = config.task_type;
    meta.output_dir = "outputs/" + config.task_id;
    meta.prompt_template = config.prompt_template;
    for (const auto& m : config.metric_specs) meta.metric_specs.emplace_back(to_string(m.metric_id));
    return meta;
}

ProcessedDataset run_processor(const TaskConfig& config, const fs::path& dataset_path, const fs::path& output_dir,
                               const ProcessorRegistry& registry) {
    if (!registry.contains(config.processor)) {
        throw EvalError(ErrorCode::UNKNOWN_PROCESSOR, "unknown processor '" + config.processor + "'");
    }
    if (!fs::exists(dataset_path)) unreadable("dataset_path not found: " + dataset_path.string());

    ProcessedDataset out;
    out.media_root = media_root_for(dataset_path);
    ProcessorContext ctx{config, dataset_path, out.media_root};
    if (config.processor.starts_with("command:")) {
        out.records = process_command(config.processor.substr(8), ctx);
    } else {
        out.records = registry.get(config.processor)(ctx);
    }

    auto issues = check_quality(out.records, config, out.media_root);
    if (!issues.empty()) throw QualityCheckError(std::move(issues));

    fs::create_directories(output_dir);
    out.file = output_dir / "data.jsonl";
    const fs::path tmp = output_dir / "data.jsonl.tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f << encode_dataset(out.records);
        if (!f.flush()) throw EvalError(ErrorCode::SOURCE_UNREADABLE, "cannot write " + tmp.string());
    }
    fs::rename(tmp, out.file);
    out.meta = make_meta(config, out.records.size());
    return out;
}

}  // namespace mmeval
