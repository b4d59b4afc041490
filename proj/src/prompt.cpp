#include "mmeval/prompt.hpp"

namespace mmeval {

std::string render_options(const std::vector<ChoiceOption>& options) {
    std::string out;
    for (const auto& opt : options) {
        if (!out.empty()) out.push_back('\n');
        out += opt.label + ". " + opt.text;
    }
    return out;
}

BuiltPrompt build_prompt(const SampleInfo& sample, const TaskMeta& meta) {
    const std::string& tmpl = meta.prompt_template;
    const bool has_options = sample.options && !sample.options->empty();
    const std::string options_block = has_options ? render_options(*sample.options) : std::string{};
    const bool uses_question = tmpl.find("{question}") != std::string::npos;
    const bool uses_options = tmpl.find("{options}") != std::string::npos;

    std::string question = sample.prompt;
    if (has_options && !uses_options) question += "\n" + options_block;

    BuiltPrompt built;
    built.media = sample.media_refs;
    if (!uses_question) {
        // Template is a trailing instruction; still scan it for bad placeholders below.
        built.text = question;
    }

    std::string rendered;
    for (std::size_t i = 0; i < tmpl.size(); ++i) {
        const char c = tmpl[i];
        if ((c == '{' || c == '}') && i + 1 < tmpl.size() && tmpl[i + 1] == c) {
            rendered.push_back(c);
            ++i;
            continue;
        }
        if (c != '{') {
            rendered.push_back(c);
            continue;
        }
        const auto close = tmpl.find('}', i);
        if (close == std::string::npos) {
            throw EvalError(ErrorCode::INVALID_CONFIG, "unterminated placeholder in prompt template");
        }
        const std::string name = tmpl.substr(i + 1, close - i - 1);
        if (name == "question") {
            rendered += question;
        } else if (name == "options") {
            if (!has_options) {
                throw EvalError(ErrorCode::INVALID_CONFIG,
                                "prompt template uses {options} but sample " + sample.question_id + " has none");
            }
            rendered += options_block;
        } else {
            throw EvalError(ErrorCode::INVALID_CONFIG, "prompt template references unknown placeholder {" + name + "}");
        }
        i = close;
    }

    if (uses_question) {
        built.text = std::move(rendered);
    } else if (!rendered.empty()) {
        built.text += built.text.empty() ? rendered : "\n" + rendered;
    }
    return built;
}

}  // namespace mmeval
