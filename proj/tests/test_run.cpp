#include "prosumm/run.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace prosumm;
namespace fs = std::filesystem;

namespace {

std::string repo_path(const std::string& rel) {
    return std::string(PROSUMM_REPO_DIR) + "/" + rel;
}

/// Fresh scratch directory per test.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
        : path_(fs::temp_directory_path() / ("prosumm_" + tag + "_" + std::to_string(::getpid()))) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

std::string mock_config_json(std::uint64_t seed, int cohort, bool with_judge) {
    ordered_json doc;
    doc["run_id"] = "testrun";
    doc["seed"] = seed;
    doc["cohort_size"] = cohort;
    doc["threshold"] = 0.5;
    doc["bank"] = repo_path("banks/pro_ctcae_prostate.bank");
    doc["generator"] = {{"free_text_probability", 0.3}};
    doc["models"] = ordered_json::array();
    doc["models"].push_back({{"model_id", "mock-perfect"}, {"backend", "mock_perfect"}});
    doc["models"].push_back({{"model_id", "mock-lossy"},
                             {"backend", "mock_lossy"},
                             {"mock_params", {{"drop_count", 1}, {"mock_seed", 7}}}});
    doc["models"].push_back({{"model_id", "mock-hallucinating"},
                             {"backend", "mock_hallucinating"},
                             {"mock_params", {{"add_count", 1}, {"mock_seed", 7}}}});
    if (with_judge) doc["judge"] = {{"model_id", "mock-judge"}, {"backend", "mock_perfect"}};
    return doc.dump(2);
}

fs::path write_config(const TempDir& dir, const std::string& content) {
    const fs::path path = dir.path() / "config.json";
    std::ofstream out(path, std::ios::binary);
    out << content;
    return path;
}

std::vector<MetricRecord> read_records(const fs::path& run_dir, const std::string& model_id) {
    RunDirectory dir(run_dir);
    const RunManifest manifest = dir.load_manifest();
    auto by_form = dir.load_records(model_id);
    std::vector<MetricRecord> out;
    for (int i = 0; i < manifest.cohort_size; ++i) {
        auto it = by_form.find("form_" + std::to_string(i));
        if (it != by_form.end()) out.push_back(it->second);
    }
    return out;
}

}  // namespace

TEST(Config, LoadsAndValidates) {
    TempDir tmp("config");
    const auto path = write_config(tmp, mock_config_json(42, 10, true));
    const HarnessConfig cfg = load_config(path);
    EXPECT_EQ(cfg.seed, 42u);
    EXPECT_EQ(cfg.cohort_size, 10);
    EXPECT_EQ(cfg.models.size(), 3u);
    ASSERT_TRUE(cfg.judge.has_value());
    EXPECT_EQ(cfg.judge->temperature, 0.0);   // judge decodes deterministically by default
    EXPECT_EQ(cfg.models[0].temperature, 0.7);
    EXPECT_EQ(cfg.models[0].max_tokens, 200);
}

TEST(Config, ZeroCohortRejected) {
    TempDir tmp("badcfg");
    const auto path = write_config(tmp, mock_config_json(42, 0, false));
    EXPECT_THROW(load_config(path), ConfigError);
}

TEST(Config, RelativeBankResolvesAgainstConfigDir) {
    TempDir tmp("relbank");
    fs::copy_file(repo_path("banks/pro_ctcae_prostate.bank"), tmp.path() / "local.bank");
    ordered_json doc = ordered_json::parse(mock_config_json(1, 5, false));
    doc["bank"] = "local.bank";
    const auto path = write_config(tmp, doc.dump());
    const HarnessConfig cfg = load_config(path);
    EXPECT_TRUE(fs::exists(cfg.bank_path));
}

TEST(Generate, WritesCohortAndManifest) {
    TempDir tmp("gen");
    const auto cfg = load_config(write_config(tmp, mock_config_json(42, 50, false)));
    const fs::path run_dir = cmd_generate(cfg, tmp.path() / "runs");

    RunDirectory dir(run_dir);
    const RunManifest manifest = dir.load_manifest();
    EXPECT_EQ(manifest.cohort_size, 50);
    EXPECT_EQ(manifest.statuses.size(), 3u);
    EXPECT_EQ(manifest.statuses.at("mock-perfect").size(), 50u);

    int form_files = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir.forms_dir())) ++form_files;
    EXPECT_EQ(form_files, 50);

    // Bank copy fingerprint-checked on load.
    EXPECT_NO_THROW(dir.load_bank_checked(manifest));
    EXPECT_EQ(dir.load_forms(manifest).size(), 50u);
    EXPECT_EQ(dir.load_truths(manifest).size(), 50u);
}

TEST(Generate, SameSeedGivesByteIdenticalForms) {
    TempDir tmp("det");
    const auto cfg = load_config(write_config(tmp, mock_config_json(42, 20, false)));
    const fs::path a = cmd_generate(cfg, tmp.path() / "a");
    const fs::path b = cmd_generate(cfg, tmp.path() / "b");
    for (int i = 0; i < 20; ++i) {
        const std::string name = "form_" + std::to_string(i) + ".form";
        EXPECT_EQ(read_file(a / "forms" / name), read_file(b / "forms" / name)) << name;
    }
}

TEST(Generate, RefusesToClobber) {
    TempDir tmp("clobber");
    const auto cfg = load_config(write_config(tmp, mock_config_json(42, 5, false)));
    cmd_generate(cfg, tmp.path() / "runs");
    EXPECT_THROW(cmd_generate(cfg, tmp.path() / "runs"), IoError);
}

TEST(Run, MockCohortCompletesAndScoresPerfect) {
    TempDir tmp("run");
    const auto cfg = load_config(write_config(tmp, mock_config_json(42, 25, true)));
    const fs::path run_dir = cmd_generate(cfg, tmp.path() / "runs");
    EXPECT_EQ(cmd_run(run_dir), 0);

    const auto records = read_records(run_dir, "mock-perfect");
    ASSERT_EQ(records.size(), 25u);
    for (const auto& r : records) {
        EXPECT_EQ(r.severity, 1.0);
        EXPECT_EQ(r.recall, 1.0);
        EXPECT_TRUE(r.treatments_flag);
        ASSERT_TRUE(r.judge_grade.has_value());
        EXPECT_EQ(*r.judge_grade, 1.0);
    }

    // Summaries persisted one file per form.
    RunDirectory dir(run_dir);
    EXPECT_TRUE(fs::exists(dir.summaries_dir("mock-perfect") / "form_0.txt"));

    const RunManifest manifest = dir.load_manifest();
    for (const auto& [model, forms] : manifest.statuses)
        for (const auto& [form, status] : forms) EXPECT_EQ(status, PairStatus::completed);
}

TEST(Run, ResumeIsIdempotent) {
    TempDir tmp("resume");
    const auto cfg = load_config(write_config(tmp, mock_config_json(9, 10, false)));
    const fs::path run_dir = cmd_generate(cfg, tmp.path() / "runs");

    // First pass on a subset, second pass over everything, then a no-op pass.
    EXPECT_EQ(cmd_run(run_dir, {"mock-perfect"}), 0);
    EXPECT_EQ(cmd_run(run_dir), 0);
    const std::string before = read_file(RunDirectory(run_dir).records_path("mock-perfect"));
    EXPECT_EQ(cmd_run(run_dir), 0);
    const std::string after = read_file(RunDirectory(run_dir).records_path("mock-perfect"));
    EXPECT_EQ(before, after);
}

TEST(Run, UnknownModelFilterRejected) {
    TempDir tmp("filter");
    const auto cfg = load_config(write_config(tmp, mock_config_json(3, 5, false)));
    const fs::path run_dir = cmd_generate(cfg, tmp.path() / "runs");
    EXPECT_THROW(cmd_run(run_dir, {"no-such-model"}), ConfigError);
}

TEST(Run, FailingEndpointIsolatedFromOtherModels) {
    TempDir tmp("isolate");
    ordered_json doc = ordered_json::parse(mock_config_json(5, 8, false));
    doc["models"].push_back({{"model_id", "unreachable"},
                             {"backend", "http_chat"},
                             {"endpoint_url", "http://127.0.0.1:1/v1/chat/completions"},
                             {"timeout_ms", 200},
                             {"max_retries", 0},
                             {"backoff_initial_ms", 1}});
    const auto cfg = load_config(write_config(tmp, doc.dump()));
    const fs::path run_dir = cmd_generate(cfg, tmp.path() / "runs");

    EXPECT_EQ(cmd_run(run_dir), 1);  // partial failure

    RunDirectory dir(run_dir);
    const RunManifest manifest = dir.load_manifest();
    for (const auto& [form, status] : manifest.statuses.at("unreachable"))
        EXPECT_EQ(status, PairStatus::failed);
    for (const auto& [form, status] : manifest.statuses.at("mock-perfect"))
        EXPECT_EQ(status, PairStatus::completed);
    EXPECT_EQ(read_records(run_dir, "mock-perfect").size(), 8u);
    EXPECT_TRUE(read_records(run_dir, "unreachable").empty());
}

TEST(Score, ExternalSummariesScoredAgainstRunTruths) {
    TempDir tmp("score");
    const auto cfg = load_config(write_config(tmp, mock_config_json(11, 10, false)));
    const fs::path run_dir = cmd_generate(cfg, tmp.path() / "runs");

    RunDirectory dir(run_dir);
    const RunManifest manifest = dir.load_manifest();
    const QuestionBank bank = dir.load_bank_checked(manifest);
    const auto forms = dir.load_forms(manifest);
    const auto truths = dir.load_truths(manifest);

    std::string lines;
    for (std::size_t i = 0; i < forms.size(); ++i) {
        ordered_json j;
        j["form_id"] = forms[i].form_id;
        j["summary"] = i == 0 ? "" : perfect_oracle(bank, forms[i], truths[i]);
        j["model_id"] = "external-model";
        j["judge_grade"] = 0.5 + 0.01 * static_cast<double>(i);
        lines += j.dump() + "\n";
    }
    const fs::path summaries = tmp.path() / "summaries.jsonl";
    std::ofstream(summaries) << lines;

    cmd_score(run_dir, summaries);
    const auto records = read_records(run_dir, "external-model");
    ASSERT_EQ(records.size(), 10u);
    for (std::size_t i = 1; i < records.size(); ++i) EXPECT_EQ(records[i].severity, 1.0);
    // The empty summary floors to 0 unless the form happens to be vacuous.
    if (!records[0].severity_vacuous) EXPECT_EQ(records[0].severity, 0.0);
    EXPECT_EQ(records[3].judge_grade, std::optional<double>(0.53));
}

TEST(Score, UnknownFormIdNamed) {
    TempDir tmp("badscore");
    const auto cfg = load_config(write_config(tmp, mock_config_json(11, 5, false)));
    const fs::path run_dir = cmd_generate(cfg, tmp.path() / "runs");
    const fs::path summaries = tmp.path() / "summaries.jsonl";
    std::ofstream(summaries) << R"({"form_id": "form_999", "summary": "text"})" << "\n";
    try {
        cmd_score(run_dir, summaries);
        FAIL() << "expected Error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("form_999"), std::string::npos);
    }
}

TEST(Report, TablesFromMockRun) {
    TempDir tmp("report");
    const auto cfg = load_config(write_config(tmp, mock_config_json(13, 12, true)));
    const fs::path run_dir = cmd_generate(cfg, tmp.path() / "runs");
    ASSERT_EQ(cmd_run(run_dir), 0);
    cmd_report(run_dir);

    RunDirectory dir(run_dir);
    const std::string md = read_file(dir.report_dir() / "tables.md");
    const std::string csv = read_file(dir.report_dir() / "tables.csv");
    EXPECT_NE(md.find("| mock-perfect | 1.00 | 0.00 | 1.00 | 1.00 |"), std::string::npos);
    EXPECT_NE(csv.find("severity,mock-perfect,1.00,0.00,1.00,1.00"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir.report_dir() / "distributions.csv"));

    // Markdown and CSV agree on every rounded severity value.
    const std::string row_md = md.substr(md.find("| mock-lossy |"));
    const std::string mean_md = row_md.substr(row_md.find('|', 1) + 2, 4);
    const std::string row_csv = csv.substr(csv.find("severity,mock-lossy,") +
                                           std::string("severity,mock-lossy,").size());
    EXPECT_EQ(mean_md, row_csv.substr(0, 4));
}

TEST(Report, EmptyRunRejected) {
    TempDir tmp("empty");
    const auto cfg = load_config(write_config(tmp, mock_config_json(17, 5, false)));
    const fs::path run_dir = cmd_generate(cfg, tmp.path() / "runs");
    EXPECT_THROW(cmd_report(run_dir), Error);
}

// Identical config + seed => identical report bytes, including distributions.
TEST(Report, FullPipelineDeterminism) {
    TempDir tmp("pipedet");
    const auto cfg = load_config(write_config(tmp, mock_config_json(29, 15, true)));
    const fs::path a = cmd_generate(cfg, tmp.path() / "a");
    const fs::path b = cmd_generate(cfg, tmp.path() / "b");
    ASSERT_EQ(cmd_run(a), 0);
    ASSERT_EQ(cmd_run(b), 0);
    cmd_report(a);
    cmd_report(b);
    EXPECT_EQ(read_file(a / "report" / "tables.csv"), read_file(b / "report" / "tables.csv"));
    EXPECT_EQ(read_file(a / "report" / "tables.md"), read_file(b / "report" / "tables.md"));
    EXPECT_EQ(read_file(a / "report" / "distributions.csv"),
              read_file(b / "report" / "distributions.csv"));
}
