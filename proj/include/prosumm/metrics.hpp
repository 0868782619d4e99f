#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "prosumm/cohort.hpp"
#include "prosumm/question_bank.hpp"
#include "prosumm/text.hpp"

namespace prosumm {

/// Keyword groups found in a summary, with evidence spans.
struct MatchResult {
    std::set<std::string> matched_groups;
    // group_id -> (pattern, byte offset of the match) for every occurrence
    std::map<std::string, std::vector<std::pair<std::string, std::size_t>>> spans;
};

namespace detail {

/// Contiguous token-sequence match at position i. The last pattern token also
/// accepts a trailing "s" ("leakage" matches "leakages"); no other stemming.
inline bool phrase_matches_at(const std::vector<Token>& tokens, std::size_t i,
                              const std::vector<Token>& pattern) {
    if (i + pattern.size() > tokens.size()) return false;
    for (std::size_t j = 0; j < pattern.size(); ++j) {
        const std::string& have = tokens[i + j].text;
        const std::string& want = pattern[j].text;
        if (have == want) continue;
        const bool last = (j + 1 == pattern.size());
        if (last && have.size() == want.size() + 1 && have.back() == 's' &&
            have.compare(0, want.size(), want) == 0)
            continue;
        return false;
    }
    return true;
}

}  // namespace detail

/// Case-insensitive, word-boundary, whitespace-normalized keyword search.
/// Multi-token patterns must occur as contiguous phrases.
inline MatchResult match_keywords(std::string_view summary, const std::vector<KeywordGroup>& groups) {
    MatchResult result;
    const std::vector<Token> tokens = tokenize(summary);
    for (const auto& group : groups) {
        for (const auto& pattern : group.patterns) {
            const std::vector<Token> want = tokenize(pattern);
            if (want.empty()) continue;
            for (std::size_t i = 0; i + want.size() <= tokens.size(); ++i) {
                if (detail::phrase_matches_at(tokens, i, want)) {
                    result.matched_groups.insert(group.group_id);
                    result.spans[group.group_id].emplace_back(pattern, tokens[i].offset);
                }
            }
        }
    }
    return result;
}

struct SeverityScore {
    double value = 0.0;
    bool vacuous = false;  // set when the form has no severe groups at all
};

/// Fraction of ground-truth severe groups mentioned in the summary. With no
/// severe groups the score is 1.0 by convention and flagged vacuous so
/// aggregation can set it aside.
inline SeverityScore severity_score(const GroundTruth& truth, const MatchResult& match) {
    const std::size_t k_p = truth.severe_groups.size();
    if (k_p == 0) return {1.0, true};
    std::size_t k_s = 0;
    for (const auto& g : truth.severe_groups) k_s += match.matched_groups.count(g);
    return {static_cast<double>(k_s) / static_cast<double>(k_p), false};
}

enum class RecallFormula {
    // As published: K_s / (K_p + K_fn). K_p already counts the missed
    // groups, so the denominator expands to K_s + 2*K_fn; values sit well
    // below the severity score whenever anything is missed.
    as_published,
    // Conventional recall K_s / (K_s + K_fn) = K_s / K_p.
    standard,
};

inline double recall_score(const GroundTruth& truth, const MatchResult& match,
                           RecallFormula formula = RecallFormula::as_published) {
    const std::size_t k_p = truth.severe_groups.size();
    std::size_t k_s = 0;
    for (const auto& g : truth.severe_groups) k_s += match.matched_groups.count(g);
    const std::size_t k_fn = k_p - k_s;
    const std::size_t denom = (formula == RecallFormula::as_published) ? k_p + k_fn : k_p;
    if (denom == 0) return 0.0;
    return static_cast<double>(k_s) / static_cast<double>(denom);
}

struct ContingencyCells {
    int tp = 0;
    int tn = 0;
    int fp = 0;
    int fn = 0;
    int total() const { return tp + tn + fp + fn; }
};

/// Binary contingency over every bank group: truth label = severe, predicted
/// label = mentioned in the summary.
inline ContingencyCells contingency_cells(const GroundTruth& truth, const MatchResult& match,
                                          int total_groups) {
    ContingencyCells c;
    for (const auto& g : truth.severe_groups) {
        if (match.matched_groups.count(g)) ++c.tp;
        else ++c.fn;
    }
    for (const auto& g : match.matched_groups) {
        if (!truth.severe_groups.count(g)) ++c.fp;
    }
    c.tn = total_groups - c.tp - c.fn - c.fp;
    return c;
}

struct KappaScore {
    double value = 0.0;
    bool degenerate = false;  // both raters single-class, chance agreement is 1
};

/// Chance-corrected agreement (P_o - P_e) / (1 - P_e) over the four cells.
inline KappaScore kappa_from_cells(const ContingencyCells& c) {
    const double n = static_cast<double>(c.total());
    const double p_o = (c.tp + c.tn) / n;
    const double truth_yes = (c.tp + c.fn) / n;
    const double pred_yes = (c.tp + c.fp) / n;
    const double p_e = truth_yes * pred_yes + (1.0 - truth_yes) * (1.0 - pred_yes);
    if (p_e >= 1.0) {
        // Both raters used a single class; agreement by chance saturates.
        return {p_o >= 1.0 ? 1.0 : -1.0, true};
    }
    return {(p_o - p_e) / (1.0 - p_e), false};
}

inline KappaScore kappa_score(const GroundTruth& truth, const MatchResult& match, int total_groups) {
    if (total_groups < 1) throw Error("kappa_score: total_groups must be >= 1");
    return kappa_from_cells(contingency_cells(truth, match, total_groups));
}

/// True iff the decimal rendering of the treatment count appears in the
/// summary as a standalone number ("30" does not match inside "130").
inline bool treatments_mentioned(std::string_view summary, const PatientForm& form) {
    const std::string want = std::to_string(form.treatments);
    for (const auto& tok : tokenize(summary))
        if (tok.text == want) return true;
    return false;
}

/// nullopt when the form had no free text; otherwise true iff at least half
/// (rounded up) of the salient tokens appear in the summary.
inline std::optional<bool> free_text_covered(std::string_view summary, const GroundTruth& truth) {
    if (truth.free_text_tokens.empty()) return std::nullopt;
    std::set<std::string> present;
    for (const auto& tok : tokenize(summary)) present.insert(tok.text);
    std::size_t hit = 0;
    for (const auto& t : truth.free_text_tokens) hit += present.count(t);
    const std::size_t need = (truth.free_text_tokens.size() + 1) / 2;
    return hit >= need;
}

struct MetricCounts {
    int k_p = 0;   // severe groups in the form
    int k_s = 0;   // severe groups mentioned in the summary
    int k_fn = 0;  // severe groups the summary missed
    int k_fp = 0;  // non-severe groups the summary presented
    int true_negatives = 0;
};

/// One (model, form) scoring outcome.
struct MetricRecord {
    std::string form_id;
    std::string model_id;
    double severity = 0.0;
    bool severity_vacuous = false;
    double recall = 0.0;
    double kappa = 0.0;
    bool kappa_degenerate = false;
    std::optional<double> judge_grade;
    bool treatments_flag = false;
    std::optional<bool> free_text_flag;
    MetricCounts counts;
};

/// Total over any summary text: composes keyword matching and all metrics.
/// Malformed model output can only lower scores, never raise errors.
inline MetricRecord score_summary(const QuestionBank& bank, const PatientForm& form,
                                  const GroundTruth& truth, std::string_view summary,
                                  std::optional<double> judge_grade = std::nullopt,
                                  RecallFormula recall_formula = RecallFormula::as_published) {
    const MatchResult match = match_keywords(summary, bank.groups);
    const ContingencyCells cells =
        contingency_cells(truth, match, static_cast<int>(bank.groups.size()));

    MetricRecord record;
    record.form_id = form.form_id;
    const SeverityScore sev = severity_score(truth, match);
    record.severity = sev.value;
    record.severity_vacuous = sev.vacuous;
    record.recall = recall_score(truth, match, recall_formula);
    const KappaScore kap = kappa_from_cells(cells);
    record.kappa = kap.value;
    record.kappa_degenerate = kap.degenerate;
    record.judge_grade = judge_grade;
    record.treatments_flag = treatments_mentioned(summary, form);
    record.free_text_flag = free_text_covered(summary, truth);
    record.counts.k_p = cells.tp + cells.fn;
    record.counts.k_s = cells.tp;
    record.counts.k_fn = cells.fn;
    record.counts.k_fp = cells.fp;
    record.counts.true_negatives = cells.tn;
    return record;
}

// ---------------------------------------------------------------------------
// Persistence (one record per line)
// ---------------------------------------------------------------------------

inline ordered_json record_to_json(const MetricRecord& r) {
    ordered_json j;
    j["form_id"] = r.form_id;
    j["model_id"] = r.model_id;
    j["severity_score"] = r.severity;
    j["severity_vacuous"] = r.severity_vacuous;
    j["recall"] = r.recall;
    j["kappa"] = r.kappa;
    j["kappa_degenerate"] = r.kappa_degenerate;
    if (r.judge_grade) j["judge_grade"] = *r.judge_grade;
    else j["judge_grade"] = nullptr;
    j["treatments_mentioned"] = r.treatments_flag;
    if (r.free_text_flag) j["free_text_covered"] = *r.free_text_flag;
    else j["free_text_covered"] = nullptr;
    j["counts"] = {{"K_p", r.counts.k_p},
                   {"K_s", r.counts.k_s},
                   {"K_fn", r.counts.k_fn},
                   {"K_fp", r.counts.k_fp},
                   {"true_negatives", r.counts.true_negatives}};
    return j;
}

inline MetricRecord record_from_json(const ordered_json& j) {
    MetricRecord r;
    try {
        r.form_id = j.at("form_id").get<std::string>();
        r.model_id = j.at("model_id").get<std::string>();
        r.severity = j.at("severity_score").get<double>();
        r.severity_vacuous = j.at("severity_vacuous").get<bool>();
        r.recall = j.at("recall").get<double>();
        r.kappa = j.at("kappa").get<double>();
        r.kappa_degenerate = j.at("kappa_degenerate").get<bool>();
        if (!j.at("judge_grade").is_null()) r.judge_grade = j["judge_grade"].get<double>();
        r.treatments_flag = j.at("treatments_mentioned").get<bool>();
        if (!j.at("free_text_covered").is_null()) r.free_text_flag = j["free_text_covered"].get<bool>();
        const auto& counts = j.at("counts");
        r.counts.k_p = counts.at("K_p").get<int>();
        r.counts.k_s = counts.at("K_s").get<int>();
        r.counts.k_fn = counts.at("K_fn").get<int>();
        r.counts.k_fp = counts.at("K_fp").get<int>();
        r.counts.true_negatives = counts.at("true_negatives").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed metric record: ") + e.what());
    }
    return r;
}

}  // namespace prosumm
