#pragma once

#include <optional>
#include <regex>
#include <string>

#include "prosumm/gateway.hpp"
#include "prosumm/prompts.hpp"

namespace prosumm {

struct JudgeOutcome {
    double grade = 0.0;  // in [0,1]
    std::string raw_reply;
    int attempts = 0;
};

/// First decimal literal in [0,1] found in the reply. Out-of-range numbers are
/// skipped, never clamped: "I rate 7/10 so 0.7" yields 0.7, "1.4" yields
/// nothing at all.
inline std::optional<double> parse_grade(const std::string& reply) {
    static const std::regex number(R"([+-]?(?:\d+\.?\d*|\.\d+))");
    for (auto it = std::sregex_iterator(reply.begin(), reply.end(), number);
         it != std::sregex_iterator(); ++it) {
        const double value = std::strtod(it->str().c_str(), nullptr);
        if (value >= 0.0 && value <= 1.0) return value;
    }
    return std::nullopt;
}

/// Asks the judge backend to grade a summary and parses the numeric reply.
/// On an unparseable reply the judge is re-asked up to two extra times (the
/// re-ask carries a distinct cache key, otherwise a cached garbage reply would
/// just be replayed). Backend failures and exhausted retries both degrade to
/// nullopt so a cohort run never aborts on the judge.
inline std::optional<JudgeOutcome> judge_summary(ModelGateway& gateway, const ModelConfig& judge_config,
                                                 const QuestionBank& bank, const PatientForm& form,
                                                 const GroundTruth& truth, const std::string& summary,
                                                 const PromptTemplate& tpl = default_judge_template()) {
    judge_config.validate();
    const PromptMessages prompt = build_judge_prompt(bank, form, summary, tpl);

    MockContext ctx;
    ctx.bank = &bank;
    ctx.form = &form;
    ctx.truth = &truth;
    ctx.judge_call = true;
    ctx.candidate_summary = &summary;
    const MockContext* ctx_ptr = (judge_config.backend == BackendKind::http_chat) ? nullptr : &ctx;

    constexpr int kTotalAttempts = 3;
    for (int attempt = 0; attempt < kTotalAttempts; ++attempt) {
        const std::string cache_extra = attempt == 0 ? "" : ("reask" + std::to_string(attempt));
        CompletionResult result;
        try {
            result = gateway.complete(judge_config, prompt, ctx_ptr, cache_extra);
        } catch (const BackendError&) {
            return std::nullopt;
        } catch (const ProtocolError&) {
            return std::nullopt;
        }
        if (auto grade = parse_grade(result.text)) {
            return JudgeOutcome{*grade, result.text, attempt + 1};
        }
    }
    return std::nullopt;
}

}  // namespace prosumm
