// Command-line front end for the PRO summarization benchmark harness.
//
// Exit codes: 0 = success (all pairs scored), 1 = partial failure or runtime
// error, 2 = configuration error.

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prosumm/error.hpp"
#include "prosumm/run.hpp"

namespace {

std::vector<std::string> split_csv(const std::string& list) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= list.size()) {
        const std::size_t comma = list.find(',', start);
        const std::string item = prosumm::trim(
            comma == std::string::npos ? list.substr(start) : list.substr(start, comma - start));
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Benchmark harness: synthetic patient-reported-outcome forms, "
                 "chat-completion summarizers, keyword-based scoring, reports"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_root = "runs";
    auto* generate = app.add_subcommand("generate", "Create a run directory with a seeded cohort");
    generate->add_option("--config", config_path, "Run configuration file")->required();
    generate->add_option("--out", out_root, "Directory that will hold the run (default: runs)");

    std::string run_dir;
    std::string models_list;
    auto* run = app.add_subcommand("run", "Summarize, judge, and score every pending (model, form) pair");
    run->add_option("run_dir", run_dir, "Run directory created by 'generate'")->required();
    run->add_option("--models", models_list, "Comma-separated subset of configured model ids");

    std::string score_run_dir;
    std::string summaries_path;
    auto* score = app.add_subcommand("score", "Score externally produced summaries against a run");
    score->add_option("run_dir", score_run_dir, "Run directory")->required();
    score->add_option("--summaries", summaries_path,
                      "Line-delimited JSON file of {form_id, summary, judge_grade?, model_id?}")
        ->required();

    std::string report_run_dir;
    auto* report = app.add_subcommand("report", "Aggregate records into tables and distributions");
    report->add_option("run_dir", report_run_dir, "Run directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) {
            const auto cfg = prosumm::load_config(config_path);
            const auto dir = prosumm::cmd_generate(cfg, out_root);
            std::printf("generated %d forms in %s\n", cfg.cohort_size, dir.string().c_str());
            return 0;
        }
        if (run->parsed()) {
            const int rc = prosumm::cmd_run(run_dir, split_csv(models_list));
            if (rc != 0) std::fprintf(stderr, "run finished with failed pairs\n");
            return rc;
        }
        if (score->parsed()) {
            prosumm::cmd_score(score_run_dir, summaries_path);
            std::printf("scored summaries from %s\n", summaries_path.c_str());
            return 0;
        }
        if (report->parsed()) {
            prosumm::cmd_report(report_run_dir);
            std::printf("report written to %s/report\n", report_run_dir.c_str());
            return 0;
        }
    } catch (const prosumm::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
