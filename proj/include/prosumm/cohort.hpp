#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prosumm/error.hpp"
#include "prosumm/question_bank.hpp"
#include "prosumm/rng.hpp"
#include "prosumm/text.hpp"

namespace prosumm {

/// One synthetic patient's completed form.
struct PatientForm {
    std::string form_id;
    std::map<std::string, std::string> answers;  // scored question_id -> chosen option
    int treatments = 0;
    std::optional<std::string> free_text;
    std::string language = "English";
};

/// What a faithful summary of one form must reflect.
struct GroundTruth {
    std::set<std::string> severe_groups;
    std::map<std::string, double> group_severity;  // group_id -> max score over its questions
    int treatments = 0;
    std::vector<std::string> free_text_tokens;     // salient lowercase tokens, stop words removed
};

inline const std::vector<std::string>& default_free_text_pool() {
    // Kept free of every keyword pattern in the default bank, so free text
    // never flips a group's matched state.
    static const std::vector<std::string> pool = {
        "occasional fever",
        "mild nausea at night",
        "slight headache in the evening",
        "trouble sleeping",
        "loss of appetite",
        "dry mouth",
    };
    return pool;
}

struct GeneratorConfig {
    std::uint64_t seed = 0;
    // Optional per-scale weights over the canonical options of that scale;
    // extra options (e.g. "Not applicable") get probability 0 when weights
    // are supplied. Absent entries sample uniformly over the listed options.
    std::map<ScaleKind, std::vector<double>> option_weights;
    std::pair<int, int> treatments_range{1, 40};  // inclusive
    std::vector<std::string> free_text_pool = default_free_text_pool();
    double free_text_probability = 0.3;
    std::map<std::string, double> language_weights{{"English", 1.0}};

    void validate() const {
        if (treatments_range.first > treatments_range.second || treatments_range.first < 0)
            throw ConfigError("generator: empty or negative treatments_range");
        if (free_text_probability < 0.0 || free_text_probability > 1.0)
            throw ConfigError("generator: free_text_probability must be in [0,1]");
        double lang_sum = 0.0;
        for (const auto& [lang, w] : language_weights) {
            bool known = false;
            for (const auto& l : supported_languages()) known |= (l == lang);
            if (!known) throw ConfigError("generator: unknown language '" + lang + "'");
            if (w < 0.0) throw ConfigError("generator: negative weight for language '" + lang + "'");
            lang_sum += w;
        }
        if (std::abs(lang_sum - 1.0) > 1e-9)
            throw ConfigError("generator: language_weights must sum to 1");
        for (const auto& [kind, weights] : option_weights) {
            if (!scale_is_scored(kind))
                throw ConfigError(std::string("generator: option_weights for unscored scale ") + to_string(kind));
            if (weights.size() != canonical_levels(kind).size())
                throw ConfigError(std::string("generator: option_weights for ") + to_string(kind) +
                                  " must list " + std::to_string(canonical_levels(kind).size()) + " values");
            double sum = 0.0;
            for (double w : weights) {
                if (w < 0.0) throw ConfigError("generator: negative option weight");
                sum += w;
            }
            if (std::abs(sum - 1.0) > 1e-9)
                throw ConfigError(std::string("generator: option_weights for ") + to_string(kind) +
                                  " must sum to 1");
        }
    }
};

/// Throws unless every scored question has exactly one listed answer and the
/// meta fields are in range.
inline void validate_form(const QuestionBank& bank, const PatientForm& form) {
    for (const auto& q : bank.questions) {
        if (!scale_is_scored(q.scale)) continue;
        auto it = form.answers.find(q.question_id);
        if (it == form.answers.end())
            throw BankError("form '" + form.form_id + "': question '" + q.question_id + "' is unanswered");
        scale_score(q, it->second);  // throws on unlisted answers
    }
    for (const auto& [qid, _] : form.answers) {
        const Question* q = bank.find_question(qid);
        if (!q) throw BankError("form '" + form.form_id + "': answer for unknown question '" + qid + "'");
        if (!scale_is_scored(q->scale))
            throw BankError("form '" + form.form_id + "': answer recorded for unscored question '" + qid + "'");
    }
    if (form.treatments < 0)
        throw BankError("form '" + form.form_id + "': negative treatment count");
    bool lang_ok = false;
    for (const auto& l : supported_languages()) lang_ok |= (l == form.language);
    if (!lang_ok)
        throw BankError("form '" + form.form_id + "': unknown language '" + form.language + "'");
}

/// Deterministic form synthesis: the random stream is a pure function of
/// (config.seed, index), so any form can be regenerated in isolation.
inline PatientForm generate_form(const QuestionBank& bank, const GeneratorConfig& config, std::uint64_t index) {
    config.validate();
    Rng rng = Rng::for_stream(config.seed, index);

    PatientForm form;
    form.form_id = "form_" + std::to_string(index);
    form.treatments = config.treatments_range.first;

    for (const auto& q : bank.questions) {
        if (scale_is_scored(q.scale)) {
            auto wit = config.option_weights.find(q.scale);
            std::string chosen;
            if (wit != config.option_weights.end()) {
                const auto& canon = canonical_levels(q.scale);
                std::size_t pick = rng.weighted(wit->second);
                const std::string want(canon[pick].label);
                for (const auto& opt : q.options)
                    if (normalize_label(opt) == want) chosen = opt;
                if (chosen.empty()) chosen = q.options.front();
            } else {
                chosen = q.options[static_cast<std::size_t>(rng.below(q.options.size()))];
            }
            form.answers[q.question_id] = chosen;
        } else if (q.scale == ScaleKind::open_numeric) {
            const auto [lo, hi] = config.treatments_range;
            form.treatments = lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
        } else if (q.scale == ScaleKind::open_text) {
            if (rng.bernoulli(config.free_text_probability) && !config.free_text_pool.empty()) {
                form.free_text =
                    config.free_text_pool[static_cast<std::size_t>(rng.below(config.free_text_pool.size()))];
            }
        } else if (q.scale == ScaleKind::language_choice) {
            std::vector<double> weights;
            for (const auto& lang : supported_languages()) {
                auto it = config.language_weights.find(lang);
                weights.push_back(it == config.language_weights.end() ? 0.0 : it->second);
            }
            form.language = supported_languages()[rng.weighted(weights)];
        }
    }
    return form;
}

inline const std::set<std::string>& free_text_stop_words() {
    static const std::set<std::string> words = {
        "a",   "an",  "and", "any",  "are", "as",  "at",   "be",   "been", "but", "by",  "did",
        "do",  "does", "for", "had",  "has", "have", "he",   "her",  "his",  "i",   "in",  "is",
        "it",  "its", "me",  "my",   "of",  "on",  "or",   "she",  "some", "that", "the", "they",
        "this", "to",  "was", "were", "with",
    };
    return words;
}

/// Lowercase content words of the free text, stop words removed, first
/// occurrence order, no duplicates.
inline std::vector<std::string> salient_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& tok : tokenize(text)) {
        if (free_text_stop_words().count(tok.text)) continue;
        if (seen.insert(tok.text).second) out.push_back(tok.text);
    }
    return out;
}

/// Per-group severity is the max score over the group's questions; a group is
/// severe iff that max is strictly greater than the threshold.
inline GroundTruth derive_ground_truth(const QuestionBank& bank, const PatientForm& form,
                                       double threshold = 0.5) {
    GroundTruth truth;
    truth.treatments = form.treatments;
    if (form.free_text) truth.free_text_tokens = salient_tokens(*form.free_text);

    for (const auto& g : bank.groups) {
        double max_score = 0.0;
        for (const Question* q : bank.questions_in_group(g.group_id)) {
            auto it = form.answers.find(q->question_id);
            if (it == form.answers.end())
                throw BankError("form '" + form.form_id + "': question '" + q->question_id + "' is unanswered");
            auto score = scale_score(*q, it->second);
            if (score && *score > max_score) max_score = *score;
        }
        truth.group_severity[g.group_id] = max_score;
        if (max_score > threshold) truth.severe_groups.insert(g.group_id);
    }
    return truth;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

inline ordered_json form_to_json(const PatientForm& form) {
    ordered_json j;
    j["form_id"] = form.form_id;
    j["answers"] = ordered_json::object();
    for (const auto& [qid, answer] : form.answers) j["answers"][qid] = answer;
    j["treatments"] = form.treatments;
    if (form.free_text) j["free_text"] = *form.free_text;
    j["language"] = form.language;
    return j;
}

inline PatientForm form_from_json(const ordered_json& j) {
    PatientForm form;
    try {
        form.form_id = j.at("form_id").get<std::string>();
        for (const auto& [qid, answer] : j.at("answers").items())
            form.answers[qid] = answer.get<std::string>();
        form.treatments = j.at("treatments").get<int>();
        if (j.contains("free_text") && !j["free_text"].is_null())
            form.free_text = j["free_text"].get<std::string>();
        form.language = j.at("language").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed form document: ") + e.what());
    }
    return form;
}

inline ordered_json truth_to_json(const GroundTruth& truth) {
    ordered_json j;
    j["severe_groups"] = std::vector<std::string>(truth.severe_groups.begin(), truth.severe_groups.end());
    j["group_severity"] = ordered_json::object();
    for (const auto& [gid, score] : truth.group_severity) j["group_severity"][gid] = score;
    j["treatments"] = truth.treatments;
    j["free_text_tokens"] = truth.free_text_tokens;
    return j;
}

inline GroundTruth truth_from_json(const ordered_json& j) {
    GroundTruth truth;
    try {
        for (const auto& g : j.at("severe_groups")) truth.severe_groups.insert(g.get<std::string>());
        for (const auto& [gid, score] : j.at("group_severity").items())
            truth.group_severity[gid] = score.get<double>();
        truth.treatments = j.at("treatments").get<int>();
        for (const auto& t : j.at("free_text_tokens")) truth.free_text_tokens.push_back(t.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed ground-truth document: ") + e.what());
    }
    return truth;
}

}  // namespace prosumm
