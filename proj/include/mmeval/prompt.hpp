#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mmeval/protocol.hpp"

namespace mmeval {

inline constexpr std::string_view kDefaultPromptTemplate = "Answer the question using a single word or phrase.";

struct BuiltPrompt {
    std::string text;
    std::vector<std::string> media;
};

// "A. text" lines, one per option.
std::string render_options(const std::vector<ChoiceOption>& options);

// Instantiates meta.prompt_template for a sample whose prompt is the raw
// question. Placeholders are {question} and {options}; "{{" and "}}" are
// literal braces. A template without {question} is appended to the question
// (and its options block) as an instruction line. If the template places
// {question} but not {options}, the options follow the question.
// Throws EvalError(INVALID_CONFIG) naming an unknown placeholder or
// {options} used on a sample without options.
BuiltPrompt build_prompt(const SampleInfo& sample, const TaskMeta& meta);

}  // namespace mmeval
