#include "prosumm/question_bank.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace prosumm;

namespace {

std::string repo_path(const std::string& rel) {
    return std::string(PROSUMM_REPO_DIR) + "/" + rel;
}

const QuestionBank& default_bank() {
    static const QuestionBank bank = load_bank_file(repo_path("banks/pro_ctcae_prostate.bank"));
    return bank;
}

// Minimal well-formed bank used to mutate into invalid variants.
std::string tiny_bank_json() {
    return R"({
      "questions": [
        {"question_id": "q1", "text": "How severe?", "scale": "severity5",
         "options": ["None", "Mild", "Moderate", "Severe", "Very severe"], "group_id": "G1"}
      ],
      "groups": [
        {"group_id": "G1", "display_name": "pain", "patterns": ["pain"]}
      ]
    })";
}

}  // namespace

TEST(QuestionBank, DefaultBankLoads) {
    const auto& bank = default_bank();
    EXPECT_EQ(bank.questions.size(), 19u);
    EXPECT_EQ(bank.groups.size(), 10u);

    const std::set<std::string> expected = {
        "FATIGUE",       "FLATULENCE",       "DIARRHEA",    "ABDOMINAL_PAIN", "URINATION_PAIN",
        "URINARY_URGENCY", "URINARY_FREQUENCY", "URINE_COLOR", "LEAKAGE",        "SKIN_BURNS"};
    std::set<std::string> actual;
    for (const auto& g : bank.groups) actual.insert(g.group_id);
    EXPECT_EQ(actual, expected);
}

TEST(QuestionBank, GroupsShareQuestions) {
    const auto& bank = default_bank();
    EXPECT_EQ(bank.questions_in_group("FATIGUE").size(), 2u);
    EXPECT_EQ(bank.questions_in_group("ABDOMINAL_PAIN").size(), 3u);
    EXPECT_EQ(bank.questions_in_group("URINARY_FREQUENCY").size(), 2u);
}

TEST(QuestionBank, EmptyBankRejected) {
    try {
        load_bank(R"({"questions": [], "groups": []})");
        FAIL() << "expected BankError";
    } catch (const BankError& e) {
        EXPECT_NE(std::string(e.what()).find("empty bank"), std::string::npos);
    }
}

TEST(QuestionBank, OptionCountMismatchNamesQuestion) {
    std::string bad = tiny_bank_json();
    bad = replace_all(bad, R"(["None", "Mild", "Moderate", "Severe", "Very severe"])",
                      R"(["None", "Mild", "Moderate", "Severe"])");
    try {
        load_bank(bad);
        FAIL() << "expected BankError";
    } catch (const BankError& e) {
        EXPECT_NE(std::string(e.what()).find("q1"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("option count mismatch"), std::string::npos);
    }
}

TEST(QuestionBank, DuplicateQuestionIdRejected) {
    std::string bad = R"({
      "questions": [
        {"question_id": "q1", "text": "A?", "scale": "yes_no", "options": ["Yes", "No"], "group_id": "G1"},
        {"question_id": "q1", "text": "B?", "scale": "yes_no", "options": ["Yes", "No"], "group_id": "G1"}
      ],
      "groups": [{"group_id": "G1", "display_name": "g", "patterns": ["g"]}]
    })";
    EXPECT_THROW(load_bank(bad), BankError);
}

TEST(QuestionBank, UnknownScaleRejected) {
    std::string bad = replace_all(tiny_bank_json(), "severity5", "severity7");
    try {
        load_bank(bad);
        FAIL() << "expected BankError";
    } catch (const BankError& e) {
        EXPECT_NE(std::string(e.what()).find("severity7"), std::string::npos);
    }
}

TEST(QuestionBank, UnknownGroupReferenceRejected) {
    std::string bad = replace_all(tiny_bank_json(), R"("group_id": "G1"}
      ],)", R"("group_id": "MISSING"}
      ],)");
    EXPECT_THROW(load_bank(bad), BankError);
}

TEST(QuestionBank, OrphanGroupRejected) {
    std::string bad = replace_all(
        tiny_bank_json(), R"({"group_id": "G1", "display_name": "pain", "patterns": ["pain"]})",
        R"({"group_id": "G1", "display_name": "pain", "patterns": ["pain"]},
           {"group_id": "G2", "display_name": "other", "patterns": ["other"]})");
    try {
        load_bank(bad);
        FAIL() << "expected BankError";
    } catch (const BankError& e) {
        EXPECT_NE(std::string(e.what()).find("orphan group 'G2'"), std::string::npos);
    }
}

TEST(ScaleScore, TableValues) {
    const auto& bank = default_bank();
    const Question* severity = bank.find_question("fatigue_severity");
    const Question* yes_no = bank.find_question("flatulence");
    const Question* frequency = bank.find_question("diarrhea_frequency");
    ASSERT_TRUE(severity && yes_no && frequency);

    EXPECT_EQ(scale_score(*severity, "Moderate"), 0.5);
    EXPECT_EQ(scale_score(*yes_no, "No"), 0.0);
    EXPECT_EQ(scale_score(*frequency, "Almost constantly"), 1.0);
}

TEST(ScaleScore, ExtraOptionsScore) {
    const auto& bank = default_bank();
    const Question* leakage = bank.find_question("leakage_frequency");
    const Question* skin = bank.find_question("skin_burns_severity");
    ASSERT_TRUE(leakage && skin);
    EXPECT_EQ(scale_score(*leakage, "Very much"), 0.75);
    EXPECT_EQ(scale_score(*skin, "Not applicable"), 0.0);
}

TEST(ScaleScore, OpenKindsUnscored) {
    const auto& bank = default_bank();
    EXPECT_EQ(scale_score(*bank.find_question("treatments"), "30"), std::nullopt);
    EXPECT_EQ(scale_score(*bank.find_question("other_symptoms"), "fever"), std::nullopt);
    EXPECT_EQ(scale_score(*bank.find_question("language"), "English"), std::nullopt);
}

TEST(ScaleScore, UnknownAnswerNamesQuestionAndAnswer) {
    const auto& bank = default_bank();
    const Question* q = bank.find_question("fatigue_severity");
    try {
        scale_score(*q, "Extremely");
        FAIL() << "expected BankError";
    } catch (const BankError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("fatigue_severity"), std::string::npos);
        EXPECT_NE(msg.find("Extremely"), std::string::npos);
    }
}

TEST(ScaleScore, CaseAndWhitespaceInsensitive) {
    const auto& bank = default_bank();
    const Question* q = bank.find_question("fatigue_severity");
    EXPECT_EQ(scale_score(*q, "very  SEVERE"), 1.0);
}

// Every listed option of every scored question converts to a value in the
// five-point codomain.
TEST(ScaleScore, TotalOverAllOptions) {
    const std::set<double> codomain = {0.0, 0.25, 0.5, 0.75, 1.0};
    for (const auto& q : default_bank().questions) {
        if (!scale_is_scored(q.scale)) continue;
        for (const auto& opt : q.options) {
            auto score = scale_score(q, opt);
            ASSERT_TRUE(score.has_value()) << q.question_id << "/" << opt;
            EXPECT_TRUE(codomain.count(*score)) << q.question_id << "/" << opt;
        }
    }
}

// Scores are non-decreasing left-to-right along each canonical scale.
TEST(ScaleScore, MonotoneInCanonicalOrder) {
    for (ScaleKind kind : {ScaleKind::yes_no, ScaleKind::severity5, ScaleKind::interference5,
                           ScaleKind::frequency5}) {
        double prev = -1.0;
        for (const auto& level : canonical_levels(kind)) {
            EXPECT_GE(level.score, prev) << to_string(kind) << "/" << level.label;
            prev = level.score;
        }
    }
}

TEST(QuestionBank, SaveLoadRoundTrip) {
    const auto& bank = default_bank();
    const std::string serialized = save_bank(bank);
    const QuestionBank reloaded = load_bank(serialized);
    EXPECT_EQ(save_bank(reloaded), serialized);
    EXPECT_EQ(reloaded.questions.size(), bank.questions.size());
    EXPECT_EQ(reloaded.groups.size(), bank.groups.size());
}

// Oracle texts use display names; each display name must trip its own group's
// patterns, or perfect summaries would score below 1.
TEST(QuestionBank, DisplayNamesMatchOwnPatterns) {
    const auto& bank = default_bank();
    for (const auto& g : bank.groups) {
        bool self_match = false;
        for (const auto& p : g.patterns)
            if (g.display_name.find(p) != std::string::npos) self_match = true;
        EXPECT_TRUE(self_match) << g.group_id;
    }
}
