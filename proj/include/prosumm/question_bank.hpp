#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "prosumm/error.hpp"
#include "prosumm/text.hpp"

namespace prosumm {

using ordered_json = nlohmann::ordered_json;

/// Answer scale of one questionnaire item. The first four kinds carry a
/// fixed severity conversion; the remaining kinds are unscored.
enum class ScaleKind {
    yes_no,
    severity5,
    interference5,
    frequency5,
    open_numeric,
    open_text,
    language_choice,
};

inline const char* to_string(ScaleKind k) {
    switch (k) {
        case ScaleKind::yes_no: return "yes_no";
        case ScaleKind::severity5: return "severity5";
        case ScaleKind::interference5: return "interference5";
        case ScaleKind::frequency5: return "frequency5";
        case ScaleKind::open_numeric: return "open_numeric";
        case ScaleKind::open_text: return "open_text";
        case ScaleKind::language_choice: return "language_choice";
    }
    return "?";
}

inline std::optional<ScaleKind> scale_kind_from(std::string_view name) {
    static const std::map<std::string, ScaleKind, std::less<>> kinds = {
        {"yes_no", ScaleKind::yes_no},
        {"severity5", ScaleKind::severity5},
        {"interference5", ScaleKind::interference5},
        {"frequency5", ScaleKind::frequency5},
        {"open_numeric", ScaleKind::open_numeric},
        {"open_text", ScaleKind::open_text},
        {"language_choice", ScaleKind::language_choice},
    };
    auto it = kinds.find(name);
    if (it == kinds.end()) return std::nullopt;
    return it->second;
}

/// True for kinds whose answers convert to a severity score.
inline bool scale_is_scored(ScaleKind k) {
    return k == ScaleKind::yes_no || k == ScaleKind::severity5 ||
           k == ScaleKind::interference5 || k == ScaleKind::frequency5;
}

struct ScaleLevel {
    std::string_view label;
    double score;
};

/// Canonical labels in increasing severity order, with their conversion scores.
inline const std::vector<ScaleLevel>& canonical_levels(ScaleKind k) {
    static const std::vector<ScaleLevel> yes_no = {{"no", 0.0}, {"yes", 1.0}};
    static const std::vector<ScaleLevel> severity = {
        {"none", 0.0}, {"mild", 0.25}, {"moderate", 0.5}, {"severe", 0.75}, {"very severe", 1.0}};
    static const std::vector<ScaleLevel> interference = {
        {"not at all", 0.0}, {"a little bit", 0.25}, {"somewhat", 0.5}, {"quite a bit", 0.75}, {"very much", 1.0}};
    static const std::vector<ScaleLevel> frequency = {
        {"never", 0.0}, {"rarely", 0.25}, {"occasionally", 0.5}, {"frequently", 0.75}, {"almost constantly", 1.0}};
    static const std::vector<ScaleLevel> none = {};
    switch (k) {
        case ScaleKind::yes_no: return yes_no;
        case ScaleKind::severity5: return severity;
        case ScaleKind::interference5: return interference;
        case ScaleKind::frequency5: return frequency;
        default: return none;
    }
}

/// Extra accepted labels beyond the canonical scale. The source questionnaire
/// lists "Very much" inside one frequency row (scored like "Frequently") and a
/// "Not applicable" escape on one severity row (scored as symptom absent).
inline const std::vector<ScaleLevel>& extra_levels(ScaleKind k) {
    static const std::vector<ScaleLevel> severity_extra = {{"not applicable", 0.0}};
    static const std::vector<ScaleLevel> frequency_extra = {{"very much", 0.75}};
    static const std::vector<ScaleLevel> none = {};
    switch (k) {
        case ScaleKind::severity5: return severity_extra;
        case ScaleKind::frequency5: return frequency_extra;
        default: return none;
    }
}

inline std::optional<double> level_score(ScaleKind k, std::string_view normalized_label) {
    for (const auto& lv : canonical_levels(k))
        if (lv.label == normalized_label) return lv.score;
    for (const auto& lv : extra_levels(k))
        if (lv.label == normalized_label) return lv.score;
    return std::nullopt;
}

/// One symptom's keyword set. A summary mentions the symptom iff any pattern
/// occurs in it (see metrics.hpp for the matching rules).
struct KeywordGroup {
    std::string group_id;
    std::string display_name;                // lowercase, used verbatim by the mock oracles
    std::vector<std::string> patterns;       // lowercase, whitespace-normalized
    std::string notes;                       // free-form provenance notes, optional
};

struct Question {
    std::string question_id;
    std::string text;                        // verbatim questionnaire wording
    ScaleKind scale = ScaleKind::open_text;
    std::vector<std::string> options;        // empty for open kinds
    std::string group_id;                    // empty when the row has no keyword group
    std::string notes;

    bool has_group() const { return !group_id.empty(); }
};

inline const std::vector<std::string>& supported_languages() {
    static const std::vector<std::string> langs = {"English", "French", "Portuguese"};
    return langs;
}

/// Immutable after load; safe to share across threads.
class QuestionBank {
public:
    std::vector<Question> questions;
    std::vector<KeywordGroup> groups;
    std::string name;
    std::string notes;

    const Question* find_question(std::string_view id) const {
        for (const auto& q : questions)
            if (q.question_id == id) return &q;
        return nullptr;
    }

    const KeywordGroup* find_group(std::string_view id) const {
        for (const auto& g : groups)
            if (g.group_id == id) return &g;
        return nullptr;
    }

    std::vector<const Question*> questions_in_group(std::string_view group_id) const {
        std::vector<const Question*> out;
        for (const auto& q : questions)
            if (q.group_id == group_id) out.push_back(&q);
        return out;
    }

    /// First question of the given scale kind, or nullptr.
    const Question* first_of(ScaleKind k) const {
        for (const auto& q : questions)
            if (q.scale == k) return &q;
        return nullptr;
    }
};

/// Conversion of one answer to its severity score. Unscored kinds yield
/// nullopt; a scored question rejects answers outside its option list.
inline std::optional<double> scale_score(const Question& q, std::string_view answer) {
    if (!scale_is_scored(q.scale)) return std::nullopt;
    const std::string norm = normalize_label(answer);
    bool listed = false;
    for (const auto& opt : q.options) {
        if (normalize_label(opt) == norm) {
            listed = true;
            break;
        }
    }
    if (!listed) {
        throw BankError("question '" + q.question_id + "': unknown answer '" + std::string(answer) + "'");
    }
    auto score = level_score(q.scale, norm);
    if (!score) {
        throw BankError("question '" + q.question_id + "': answer '" + std::string(answer) +
                        "' has no conversion score");
    }
    return score;
}

namespace detail {

inline void validate_bank(const QuestionBank& bank) {
    if (bank.questions.empty()) throw BankError("empty bank");

    std::set<std::string> question_ids;
    std::set<std::string> referenced_groups;
    for (const auto& q : bank.questions) {
        if (q.question_id.empty()) throw BankError("question with empty question_id");
        if (!question_ids.insert(q.question_id).second)
            throw BankError("duplicate question_id '" + q.question_id + "'");
        if (q.text.empty())
            throw BankError("question '" + q.question_id + "': empty text");

        if (scale_is_scored(q.scale)) {
            const auto& canon = canonical_levels(q.scale);
            std::set<std::string> seen;
            for (const auto& opt : q.options) {
                const std::string norm = normalize_label(opt);
                if (norm.empty())
                    throw BankError("question '" + q.question_id + "': blank option");
                if (!seen.insert(norm).second)
                    throw BankError("question '" + q.question_id + "': duplicate option '" + opt + "'");
                if (!level_score(q.scale, norm))
                    throw BankError("question '" + q.question_id + "': option '" + opt +
                                    "' is not valid for scale " + to_string(q.scale));
            }
            for (const auto& lv : canon) {
                if (!seen.count(std::string(lv.label)))
                    throw BankError("question '" + q.question_id + "': option count mismatch for scale " +
                                    std::string(to_string(q.scale)) + " (missing '" + std::string(lv.label) +
                                    "', listed " + std::to_string(q.options.size()) + " options)");
            }
        } else if (q.scale == ScaleKind::language_choice) {
            std::set<std::string> want, got;
            for (const auto& l : supported_languages()) want.insert(normalize_label(l));
            for (const auto& opt : q.options) got.insert(normalize_label(opt));
            if (want != got)
                throw BankError("question '" + q.question_id +
                                "': language_choice options must be exactly English, French, Portuguese");
        } else {
            if (!q.options.empty())
                throw BankError("question '" + q.question_id + "': open question must not list options");
        }

        if (q.has_group()) {
            if (!scale_is_scored(q.scale))
                throw BankError("question '" + q.question_id + "': unscored question cannot carry group '" +
                                q.group_id + "'");
            if (!bank.find_group(q.group_id))
                throw BankError("question '" + q.question_id + "' references unknown group '" + q.group_id + "'");
            referenced_groups.insert(q.group_id);
        }
    }

    std::set<std::string> group_ids;
    for (const auto& g : bank.groups) {
        if (g.group_id.empty()) throw BankError("group with empty group_id");
        if (!group_ids.insert(g.group_id).second)
            throw BankError("duplicate group_id '" + g.group_id + "'");
        if (g.display_name.empty())
            throw BankError("group '" + g.group_id + "': empty display_name");
        if (g.patterns.empty())
            throw BankError("group '" + g.group_id + "': no patterns");
        for (const auto& p : g.patterns) {
            if (collapse_whitespace(p).empty())
                throw BankError("group '" + g.group_id + "': blank pattern");
        }
        if (!referenced_groups.count(g.group_id))
            throw BankError("orphan group '" + g.group_id + "' (no question references it)");
    }
}

}  // namespace detail

/// Parses and validates a bank document (JSON, UTF-8).
inline QuestionBank load_bank(const std::string& text) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw BankError(std::string("malformed bank file: ") + e.what());
    }

    QuestionBank bank;
    try {
        bank.name = doc.value("name", "");
        bank.notes = doc.value("notes", "");
        if (!doc.contains("questions") || !doc["questions"].is_array())
            throw BankError("bank file is missing the 'questions' collection");
        for (const auto& jq : doc["questions"]) {
            Question q;
            q.question_id = jq.at("question_id").get<std::string>();
            q.text = jq.at("text").get<std::string>();
            const std::string scale_name = jq.at("scale").get<std::string>();
            auto kind = scale_kind_from(scale_name);
            if (!kind)
                throw BankError("question '" + q.question_id + "': unknown scale kind '" + scale_name + "'");
            q.scale = *kind;
            if (jq.contains("options"))
                q.options = jq["options"].get<std::vector<std::string>>();
            q.group_id = jq.value("group_id", "");
            q.notes = jq.value("notes", "");
            bank.questions.push_back(std::move(q));
        }
        if (doc.contains("groups")) {
            for (const auto& jg : doc["groups"]) {
                KeywordGroup g;
                g.group_id = jg.at("group_id").get<std::string>();
                g.display_name = normalize_label(jg.at("display_name").get<std::string>());
                for (const auto& jp : jg.at("patterns"))
                    g.patterns.push_back(normalize_label(jp.get<std::string>()));
                g.notes = jg.value("notes", "");
                bank.groups.push_back(std::move(g));
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw BankError(std::string("malformed bank file: ") + e.what());
    }

    detail::validate_bank(bank);
    return bank;
}

inline QuestionBank load_bank_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open bank file: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return load_bank(buf.str());
}

/// Canonical serialization; load_bank(save_bank(b)) is structurally identical to b.
inline std::string save_bank(const QuestionBank& bank) {
    ordered_json doc;
    if (!bank.name.empty()) doc["name"] = bank.name;
    if (!bank.notes.empty()) doc["notes"] = bank.notes;
    doc["questions"] = ordered_json::array();
    for (const auto& q : bank.questions) {
        ordered_json jq;
        jq["question_id"] = q.question_id;
        jq["text"] = q.text;
        jq["scale"] = to_string(q.scale);
        if (!q.options.empty()) jq["options"] = q.options;
        if (q.has_group()) jq["group_id"] = q.group_id;
        if (!q.notes.empty()) jq["notes"] = q.notes;
        doc["questions"].push_back(std::move(jq));
    }
    doc["groups"] = ordered_json::array();
    for (const auto& g : bank.groups) {
        ordered_json jg;
        jg["group_id"] = g.group_id;
        jg["display_name"] = g.display_name;
        jg["patterns"] = g.patterns;
        if (!g.notes.empty()) jg["notes"] = g.notes;
        doc["groups"].push_back(std::move(jg));
    }
    return doc.dump(2) + "\n";
}

}  // namespace prosumm
