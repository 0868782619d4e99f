#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "prosumm/cohort.hpp"
#include "prosumm/error.hpp"
#include "prosumm/question_bank.hpp"
#include "prosumm/text.hpp"

namespace prosumm {

/// Chat-style message list; the first message is always the system role.
struct PromptMessages {
    struct Message {
        std::string role;
        std::string content;
    };
    std::vector<Message> messages;

    bool operator==(const PromptMessages& other) const {
        if (messages.size() != other.messages.size()) return false;
        for (std::size_t i = 0; i < messages.size(); ++i)
            if (messages[i].role != other.messages[i].role ||
                messages[i].content != other.messages[i].content)
                return false;
        return true;
    }
};

/// A prompt template document: a [system] section, a [user] section with
/// placeholders, and an optional [example] section expanded into {{example}}.
struct PromptTemplate {
    std::string system;
    std::string user;
    std::string example;
};

// The summarization instruction is fixed wording; changing it invalidates
// score comparisons, so the operative copy lives here and the shipped
// prompts/ files are byte-compared against it in the test suite.
inline std::string_view summarizer_template_text() {
    return R"([system]
You are an experienced radiation oncologist physician. You are provided this list of questions and answers about patient symptoms during their weekly follow-up visit during radiotherapy.
Please summarize the following data into two sentences of natural language for your physician colleagues. Indicate in your summary only the most important symptoms using exactly the group of words in parenthesis at the end of the question.

A “yes” is important. Each time, include the number of radiation treatments and the answer of the last question if answered.
Provide the summarization in the English language.
[example]
This patient, after 30 radiation treatments, reports very severe symptoms including fatigue, flatulence and diarrhea. The patient also experiences severe skin burns from radiation and leakages that impact his daily activities. He also mentioned occasional fever as an additional symptom.
[user]
Example of summarized symptoms:
{{example}}

Questions and answers:
{{qa_block}}
)";
}

inline std::string_view judge_template_text() {
    return R"([system]
As an evaluator of LLM summarization accuracy, you are tasked with assessing the quality of the provided summary in relation to the original patient data.

Assign a score ranging from 0 to 1, where 0 indicates a completely inaccurate summary and 1 signifies a perfect summary.

Your evaluation should specifically focus on how well the summary encapsulates all significant symptoms reported by the patient, with a strong emphasis on accuracy and the inclusion of critical information.

Incorrect or misleading information in the summary should highly impact the score towards the lower end.

Your response should consist solely of the numerical score without additional commentary.
[user]
Original patient data:
{{qa_block}}

Summary to evaluate:
{{summary}}
)";
}

/// Parses the [system]/[user]/[example] section format. Each section keeps its
/// internal newlines; the final newline before the next marker is dropped.
inline PromptTemplate parse_prompt_template(std::string_view text) {
    PromptTemplate tpl;
    std::string* current = nullptr;
    std::size_t pos = 0;
    bool first_line_of_section = true;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        std::string_view line =
            (eol == std::string_view::npos) ? text.substr(pos) : text.substr(pos, eol - pos);
        if (line == "[system]") {
            current = &tpl.system;
            first_line_of_section = true;
        } else if (line == "[user]") {
            current = &tpl.user;
            first_line_of_section = true;
        } else if (line == "[example]") {
            current = &tpl.example;
            first_line_of_section = true;
        } else if (current) {
            if (!first_line_of_section) current->push_back('\n');
            current->append(line);
            first_line_of_section = false;
        } else if (!trim(line).empty()) {
            throw ConfigError("prompt template: content before the first section marker");
        }
        if (eol == std::string_view::npos) break;
        pos = eol + 1;
    }
    if (tpl.system.empty()) throw ConfigError("prompt template: missing [system] section");
    if (tpl.user.empty()) throw ConfigError("prompt template: missing [user] section");
    return tpl;
}

inline const PromptTemplate& default_summarizer_template() {
    static const PromptTemplate tpl = parse_prompt_template(summarizer_template_text());
    return tpl;
}

inline const PromptTemplate& default_judge_template() {
    static const PromptTemplate tpl = parse_prompt_template(judge_template_text());
    return tpl;
}

/// Question line label: the verbatim text with the keyword-group marker in
/// parentheses at the end, e.g. "... at its WORST (FATIGUE)?". The summary
/// instruction tells the model to reuse exactly the parenthesised words.
inline std::string question_label(const QuestionBank& bank, const Question& q) {
    if (!q.has_group()) return q.text;
    const KeywordGroup* g = bank.find_group(q.group_id);
    std::string marker = " (" + to_lower(g->display_name) + ")";
    std::transform(marker.begin(), marker.end(), marker.begin(),
                   [](char c) { return (c >= 'a' && c <= 'z') ? static_cast<char>(c - 'a' + 'A') : c; });
    if (!q.text.empty() && q.text.back() == '?')
        return q.text.substr(0, q.text.size() - 1) + marker + "?";
    return q.text + marker;
}

/// One line per bank question, in bank order: "<label>: <answer>".
/// An unanswered free-text row renders as "None reported" so the judge sees
/// the same form the summarizer saw.
inline std::string render_qa_block(const QuestionBank& bank, const PatientForm& form) {
    std::vector<std::string> lines;
    lines.reserve(bank.questions.size());
    for (const auto& q : bank.questions) {
        std::string answer;
        if (scale_is_scored(q.scale)) {
            auto it = form.answers.find(q.question_id);
            if (it == form.answers.end())
                throw BankError("form '" + form.form_id + "': question '" + q.question_id + "' is unanswered");
            answer = it->second;
        } else if (q.scale == ScaleKind::open_numeric) {
            answer = std::to_string(form.treatments);
        } else if (q.scale == ScaleKind::open_text) {
            answer = form.free_text.value_or("None reported");
        } else {
            answer = form.language;
        }
        lines.push_back(question_label(bank, q) + ": " + answer);
    }
    return join(lines, "\n");
}

inline PromptMessages build_summarizer_prompt(const QuestionBank& bank, const PatientForm& form,
                                              const PromptTemplate& tpl = default_summarizer_template()) {
    std::string user = tpl.user;
    user = replace_all(std::move(user), "{{example}}", tpl.example);
    user = replace_all(std::move(user), "{{qa_block}}", render_qa_block(bank, form));
    return PromptMessages{{{"system", tpl.system}, {"user", std::move(user)}}};
}

inline PromptMessages build_judge_prompt(const QuestionBank& bank, const PatientForm& form,
                                         const std::string& summary,
                                         const PromptTemplate& tpl = default_judge_template()) {
    if (trim(summary).empty()) throw ConfigError("judge prompt requires a non-empty summary");
    std::string user = tpl.user;
    user = replace_all(std::move(user), "{{qa_block}}", render_qa_block(bank, form));
    user = replace_all(std::move(user), "{{summary}}", summary);
    return PromptMessages{{{"system", tpl.system}, {"user", std::move(user)}}};
}

}  // namespace prosumm
