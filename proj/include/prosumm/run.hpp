#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "prosumm/cohort.hpp"
#include "prosumm/error.hpp"
#include "prosumm/gateway.hpp"
#include "prosumm/judge.hpp"
#include "prosumm/metrics.hpp"
#include "prosumm/prompts.hpp"
#include "prosumm/question_bank.hpp"
#include "prosumm/report.hpp"

namespace prosumm {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

/// Crash-consistent write: the target either keeps its old content or holds
/// the complete new content, never a prefix.
inline void atomic_write_file(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << content;
        if (!out) throw IoError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string());
}

/// Replaces filename-hostile characters so model ids map to stable file names.
inline std::string sanitize_filename(std::string_view name) {
    std::string out;
    out.reserve(name.size());
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '.' || c == '_' || c == '-';
        out.push_back(ok ? c : '_');
    }
    return out.empty() ? "_" : out;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct HarnessOptions {
    double threshold = 0.5;  // a group is severe iff its score is strictly greater
    RecallFormula recall_formula = RecallFormula::as_published;
    ExclusionPolicy policy;
    int concurrency = 4;
};

struct HarnessConfig {
    std::string run_id;
    std::uint64_t seed = 0;
    int cohort_size = 50;
    fs::path bank_path;
    GeneratorConfig generator;
    std::vector<ModelConfig> models;
    std::optional<ModelConfig> judge;
    HarnessOptions options;

    void validate() const {
        if (cohort_size <= 0) throw ConfigError("cohort_size must be >= 1");
        if (options.threshold < 0.0 || options.threshold > 1.0)
            throw ConfigError("threshold must be in [0,1]");
        if (options.concurrency < 1) throw ConfigError("concurrency must be >= 1");
        generator.validate();
        std::set<std::string> ids;
        for (const auto& m : models) {
            m.validate();
            if (!ids.insert(m.model_id).second)
                throw ConfigError("duplicate model_id '" + m.model_id + "'");
        }
        if (judge) judge->validate();
    }
};

namespace detail {

inline std::chrono::milliseconds ms_field(const ordered_json& j, const char* field,
                                          std::chrono::milliseconds fallback) {
    if (!j.contains(field)) return fallback;
    return std::chrono::milliseconds(j.at(field).get<long long>());
}

inline ModelConfig model_config_from_json(const ordered_json& j, bool is_judge) {
    ModelConfig m;
    try {
        m.model_id = j.at("model_id").get<std::string>();
        const std::string backend = j.value("backend", "http_chat");
        auto kind = backend_kind_from(backend);
        if (!kind)
            throw ConfigError("model '" + m.model_id + "': unknown backend '" + backend + "'");
        m.backend = *kind;
        m.endpoint_url = j.value("endpoint_url", "");
        m.api_key_env = j.value("api_key_env", "");
        // The judge defaults to deterministic decoding; summarizers keep the
        // benchmark's sampling temperature.
        m.temperature = j.value("temperature", is_judge ? 0.0 : 0.7);
        m.max_tokens = j.value("max_tokens", 200);
        m.timeout = ms_field(j, "timeout_ms", std::chrono::milliseconds(30000));
        m.max_retries = j.value("max_retries", 2);
        m.backoff_initial = ms_field(j, "backoff_initial_ms", std::chrono::milliseconds(1000));
        if (j.contains("mock_params")) {
            const auto& mp = j["mock_params"];
            m.mock.drop_count = mp.value("drop_count", 0);
            m.mock.add_count = mp.value("add_count", 0);
            m.mock.mock_seed = mp.value("mock_seed", 0ULL);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model config: ") + e.what());
    }
    m.validate();
    return m;
}

inline ordered_json model_config_to_json(const ModelConfig& m) {
    ordered_json j;
    j["model_id"] = m.model_id;
    j["backend"] = to_string(m.backend);
    if (!m.endpoint_url.empty()) j["endpoint_url"] = m.endpoint_url;
    if (!m.api_key_env.empty()) j["api_key_env"] = m.api_key_env;
    j["temperature"] = m.temperature;
    j["max_tokens"] = m.max_tokens;
    j["timeout_ms"] = m.timeout.count();
    j["max_retries"] = m.max_retries;
    j["backoff_initial_ms"] = m.backoff_initial.count();
    if (m.backend == BackendKind::mock_lossy || m.backend == BackendKind::mock_hallucinating) {
        j["mock_params"] = {{"drop_count", m.mock.drop_count},
                            {"add_count", m.mock.add_count},
                            {"mock_seed", m.mock.mock_seed}};
    }
    return j;
}

inline GeneratorConfig generator_config_from_json(const ordered_json& j, std::uint64_t seed) {
    GeneratorConfig g;
    g.seed = seed;
    try {
        if (j.contains("treatments_range")) {
            const auto& r = j["treatments_range"];
            g.treatments_range = {r.at(0).get<int>(), r.at(1).get<int>()};
        }
        if (j.contains("free_text_pool"))
            g.free_text_pool = j["free_text_pool"].get<std::vector<std::string>>();
        g.free_text_probability = j.value("free_text_probability", 0.3);
        if (j.contains("language_weights")) {
            g.language_weights.clear();
            for (const auto& [lang, w] : j["language_weights"].items())
                g.language_weights[lang] = w.get<double>();
        }
        if (j.contains("option_weights")) {
            for (const auto& [scale_name, weights] : j["option_weights"].items()) {
                auto kind = scale_kind_from(scale_name);
                if (!kind) throw ConfigError("option_weights: unknown scale kind '" + scale_name + "'");
                g.option_weights[*kind] = weights.get<std::vector<double>>();
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed generator config: ") + e.what());
    }
    return g;
}

inline ordered_json generator_config_to_json(const GeneratorConfig& g) {
    ordered_json j;
    j["treatments_range"] = {g.treatments_range.first, g.treatments_range.second};
    j["free_text_pool"] = g.free_text_pool;
    j["free_text_probability"] = g.free_text_probability;
    j["language_weights"] = ordered_json::object();
    for (const auto& [lang, w] : g.language_weights) j["language_weights"][lang] = w;
    if (!g.option_weights.empty()) {
        j["option_weights"] = ordered_json::object();
        for (const auto& [kind, weights] : g.option_weights)
            j["option_weights"][to_string(kind)] = weights;
    }
    return j;
}

}  // namespace detail

/// Reads a run configuration document. A relative bank path resolves against
/// the config file's directory, so configs stay relocatable. Secrets never
/// appear in the file: models name environment variables instead.
inline HarnessConfig load_config(const fs::path& config_path) {
    ordered_json doc;
    try {
        doc = ordered_json::parse(read_file(config_path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config " + config_path.string() + ": " + e.what());
    }

    HarnessConfig cfg;
    try {
        cfg.seed = doc.at("seed").get<std::uint64_t>();
        cfg.run_id = doc.value("run_id", "run_" + std::to_string(cfg.seed));
        cfg.cohort_size = doc.value("cohort_size", 50);
        cfg.options.threshold = doc.value("threshold", 0.5);
        cfg.options.concurrency = doc.value("concurrency", 4);
        const std::string recall_name = doc.value("recall_formula", "as_published");
        if (recall_name == "as_published") cfg.options.recall_formula = RecallFormula::as_published;
        else if (recall_name == "standard") cfg.options.recall_formula = RecallFormula::standard;
        else throw ConfigError("recall_formula must be 'as_published' or 'standard'");
        cfg.options.policy.exclude_vacuous = !doc.value("include_vacuous", false);

        fs::path bank = doc.at("bank").get<std::string>();
        if (bank.is_relative()) bank = config_path.parent_path() / bank;
        cfg.bank_path = bank;

        cfg.generator = detail::generator_config_from_json(
            doc.contains("generator") ? doc["generator"] : ordered_json::object(), cfg.seed);

        if (doc.contains("models"))
            for (const auto& jm : doc["models"])
                cfg.models.push_back(detail::model_config_from_json(jm, false));
        if (doc.contains("judge") && !doc["judge"].is_null())
            cfg.judge = detail::model_config_from_json(doc["judge"], true);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed config " + config_path.string() + ": " + e.what());
    }
    cfg.validate();
    return cfg;
}

// ---------------------------------------------------------------------------
// Run directory & manifest
// ---------------------------------------------------------------------------

enum class PairStatus { pending, completed, failed };

inline const char* to_string(PairStatus s) {
    switch (s) {
        case PairStatus::pending: return "pending";
        case PairStatus::completed: return "completed";
        case PairStatus::failed: return "failed";
    }
    return "?";
}

inline PairStatus pair_status_from(std::string_view name) {
    if (name == "pending") return PairStatus::pending;
    if (name == "completed") return PairStatus::completed;
    if (name == "failed") return PairStatus::failed;
    throw IoError("unknown pair status '" + std::string(name) + "'");
}

struct RunManifest {
    std::string run_id;
    std::string created_at;
    std::uint64_t seed = 0;
    int cohort_size = 0;
    fs::path bank_path;       // relative to the run directory
    std::string bank_source;  // where the bank was copied from
    std::string bank_hash;    // fnv1a64 fingerprint of the bank bytes
    GeneratorConfig generator;
    std::vector<ModelConfig> models;
    std::optional<ModelConfig> judge;
    HarnessOptions options;
    // statuses cover the full (model x form) grid for the configured models
    std::map<std::string, std::map<std::string, PairStatus>> statuses;
};

inline ordered_json manifest_to_json(const RunManifest& m) {
    ordered_json j;
    j["run_id"] = m.run_id;
    j["created_at"] = m.created_at;
    j["seed"] = m.seed;
    j["cohort_size"] = m.cohort_size;
    j["threshold"] = m.options.threshold;
    j["recall_formula"] =
        m.options.recall_formula == RecallFormula::as_published ? "as_published" : "standard";
    j["include_vacuous"] = !m.options.policy.exclude_vacuous;
    j["concurrency"] = m.options.concurrency;
    j["bank_path"] = m.bank_path.generic_string();
    j["bank_source"] = m.bank_source;
    j["bank_hash"] = m.bank_hash;
    j["generator"] = detail::generator_config_to_json(m.generator);
    j["models"] = ordered_json::array();
    for (const auto& mc : m.models) j["models"].push_back(detail::model_config_to_json(mc));
    j["judge"] = m.judge ? detail::model_config_to_json(*m.judge) : ordered_json(nullptr);
    j["statuses"] = ordered_json::object();
    for (const auto& [model_id, forms] : m.statuses) {
        ordered_json jm = ordered_json::object();
        for (const auto& [form_id, status] : forms) jm[form_id] = to_string(status);
        j["statuses"][model_id] = std::move(jm);
    }
    return j;
}

inline RunManifest manifest_from_json(const ordered_json& j) {
    RunManifest m;
    try {
        m.run_id = j.at("run_id").get<std::string>();
        m.created_at = j.value("created_at", "");
        m.seed = j.at("seed").get<std::uint64_t>();
        m.cohort_size = j.at("cohort_size").get<int>();
        m.options.threshold = j.at("threshold").get<double>();
        m.options.recall_formula = j.value("recall_formula", "as_published") == std::string("standard")
                                       ? RecallFormula::standard
                                       : RecallFormula::as_published;
        m.options.policy.exclude_vacuous = !j.value("include_vacuous", false);
        m.options.concurrency = j.value("concurrency", 4);
        m.bank_path = j.at("bank_path").get<std::string>();
        m.bank_source = j.value("bank_source", "");
        m.bank_hash = j.at("bank_hash").get<std::string>();
        m.generator = detail::generator_config_from_json(j.at("generator"), m.seed);
        for (const auto& jm : j.at("models"))
            m.models.push_back(detail::model_config_from_json(jm, false));
        if (!j.at("judge").is_null()) m.judge = detail::model_config_from_json(j["judge"], true);
        for (const auto& [model_id, forms] : j.at("statuses").items())
            for (const auto& [form_id, status] : forms.items())
                m.statuses[model_id][form_id] = pair_status_from(status.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("malformed manifest: ") + e.what());
    }
    return m;
}

/// Path layout of one benchmark execution.
class RunDirectory {
public:
    explicit RunDirectory(fs::path root) : root_(std::move(root)) {}

    const fs::path& root() const { return root_; }
    fs::path manifest_path() const { return root_ / "manifest.json"; }
    fs::path bank_path(const RunManifest& m) const { return root_ / m.bank_path; }
    fs::path forms_dir() const { return root_ / "forms"; }
    fs::path truths_dir() const { return root_ / "truths"; }
    fs::path summaries_dir(const std::string& model_id) const {
        return root_ / "summaries" / sanitize_filename(model_id);
    }
    fs::path records_dir() const { return root_ / "records"; }
    fs::path records_path(const std::string& model_id) const {
        return records_dir() / (sanitize_filename(model_id) + ".recs");
    }
    fs::path cache_dir() const { return root_ / "cache"; }
    fs::path report_dir() const { return root_ / "report"; }

    fs::path form_path(std::uint64_t index) const {
        return forms_dir() / ("form_" + std::to_string(index) + ".form");
    }
    fs::path truth_path(std::uint64_t index) const {
        return truths_dir() / ("form_" + std::to_string(index) + ".truth");
    }

    RunManifest load_manifest() const {
        if (!fs::exists(manifest_path()))
            throw IoError("no manifest in " + root_.string() + " (not a run directory?)");
        try {
            return manifest_from_json(ordered_json::parse(read_file(manifest_path())));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("malformed manifest: " + std::string(e.what()));
        }
    }

    void save_manifest(const RunManifest& m) const {
        atomic_write_file(manifest_path(), manifest_to_json(m).dump(2) + "\n");
    }

    /// Loads the bank named by the manifest and verifies its fingerprint.
    QuestionBank load_bank_checked(const RunManifest& m) const {
        const std::string text = read_file(bank_path(m));
        const std::string hash = "fnv1a64:" + to_hex(fnv1a64(text));
        if (hash != m.bank_hash)
            throw IoError("bank file " + bank_path(m).string() + " does not match the manifest hash (" +
                          hash + " vs " + m.bank_hash + ")");
        return load_bank(text);
    }

    std::vector<PatientForm> load_forms(const RunManifest& m) const {
        std::vector<PatientForm> forms;
        forms.reserve(static_cast<std::size_t>(m.cohort_size));
        for (int i = 0; i < m.cohort_size; ++i) {
            try {
                forms.push_back(
                    form_from_json(ordered_json::parse(read_file(form_path(static_cast<std::uint64_t>(i))))));
            } catch (const nlohmann::json::exception& e) {
                throw IoError("malformed form file: " + std::string(e.what()));
            }
        }
        return forms;
    }

    std::vector<GroundTruth> load_truths(const RunManifest& m) const {
        std::vector<GroundTruth> truths;
        truths.reserve(static_cast<std::size_t>(m.cohort_size));
        for (int i = 0; i < m.cohort_size; ++i) {
            try {
                truths.push_back(truth_from_json(
                    ordered_json::parse(read_file(truth_path(static_cast<std::uint64_t>(i))))));
            } catch (const nlohmann::json::exception& e) {
                throw IoError("malformed ground-truth file: " + std::string(e.what()));
            }
        }
        return truths;
    }

    /// Existing records for a model, keyed by form_id.
    std::map<std::string, MetricRecord> load_records(const std::string& model_id) const {
        std::map<std::string, MetricRecord> out;
        const fs::path path = records_path(model_id);
        if (!fs::exists(path)) return out;
        std::istringstream in(read_file(path));
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).empty()) continue;
            try {
                MetricRecord r = record_from_json(ordered_json::parse(line));
                out[r.form_id] = std::move(r);
            } catch (const nlohmann::json::exception& e) {
                throw IoError("malformed record line in " + path.string() + ": " + e.what());
            }
        }
        return out;
    }

    /// Rewrites a model's record file, records in cohort form order.
    void save_records(const std::string& model_id, const RunManifest& m,
                      const std::map<std::string, MetricRecord>& records) const {
        fs::create_directories(records_dir());
        std::string out;
        for (int i = 0; i < m.cohort_size; ++i) {
            const std::string form_id = "form_" + std::to_string(i);
            auto it = records.find(form_id);
            if (it != records.end()) out += record_to_json(it->second).dump() + "\n";
        }
        atomic_write_file(records_path(model_id), out);
    }

private:
    fs::path root_;
};

// ---------------------------------------------------------------------------
// Pipeline commands
// ---------------------------------------------------------------------------

/// Creates a run directory with the cohort, ground truths, a bank copy, and
/// the manifest. Returns the run directory path.
inline fs::path cmd_generate(const HarnessConfig& cfg, const fs::path& out_root) {
    cfg.validate();
    const fs::path run_dir = out_root / cfg.run_id;
    if (fs::exists(run_dir))
        throw IoError("run directory already exists: " + run_dir.string());
    RunDirectory dir(run_dir);
    fs::create_directories(dir.forms_dir());
    fs::create_directories(dir.truths_dir());

    const std::string bank_text = read_file(cfg.bank_path);
    const QuestionBank bank = load_bank(bank_text);
    atomic_write_file(run_dir / "bank.bank", bank_text);

    RunManifest manifest;
    manifest.run_id = cfg.run_id;
    manifest.created_at = detail::iso8601_utc_now();
    manifest.seed = cfg.seed;
    manifest.cohort_size = cfg.cohort_size;
    manifest.bank_path = "bank.bank";
    manifest.bank_source = cfg.bank_path.string();
    manifest.bank_hash = "fnv1a64:" + to_hex(fnv1a64(bank_text));
    manifest.generator = cfg.generator;
    manifest.models = cfg.models;
    manifest.judge = cfg.judge;
    manifest.options = cfg.options;

    for (int i = 0; i < cfg.cohort_size; ++i) {
        const PatientForm form = generate_form(bank, cfg.generator, static_cast<std::uint64_t>(i));
        const GroundTruth truth = derive_ground_truth(bank, form, cfg.options.threshold);
        atomic_write_file(dir.form_path(static_cast<std::uint64_t>(i)),
                          form_to_json(form).dump(2) + "\n");
        atomic_write_file(dir.truth_path(static_cast<std::uint64_t>(i)),
                          truth_to_json(truth).dump(2) + "\n");
        for (const auto& model : cfg.models)
            manifest.statuses[model.model_id][form.form_id] = PairStatus::pending;
    }
    dir.save_manifest(manifest);
    return run_dir;
}

/// Executes the (model x form) grid: prompt, completion, scoring, optional
/// judging, persistence. Completed pairs are skipped, so interrupted runs
/// resume where they stopped. Returns 0 when every pair completed, 1 when any
/// pair failed.
inline int cmd_run(const fs::path& run_dir, const std::vector<std::string>& model_filter = {}) {
    RunDirectory dir(run_dir);
    RunManifest manifest = dir.load_manifest();
    const QuestionBank bank = dir.load_bank_checked(manifest);
    const std::vector<PatientForm> forms = dir.load_forms(manifest);
    const std::vector<GroundTruth> truths = dir.load_truths(manifest);

    std::vector<const ModelConfig*> selected;
    for (const auto& model : manifest.models) {
        if (model_filter.empty()) {
            selected.push_back(&model);
            continue;
        }
        for (const auto& wanted : model_filter)
            if (wanted == model.model_id) selected.push_back(&model);
    }
    if (!model_filter.empty() && selected.size() != model_filter.size())
        throw ConfigError("model filter names a model that is not in the run manifest");

    ModelGateway gateway(dir.cache_dir(), manifest.options.concurrency);

    // Records already on disk survive a resume untouched.
    std::map<std::string, std::map<std::string, MetricRecord>> records;
    for (const ModelConfig* model : selected) records[model->model_id] = dir.load_records(model->model_id);

    struct Task {
        const ModelConfig* model;
        std::size_t form_index;
    };
    std::vector<Task> tasks;
    for (const ModelConfig* model : selected) {
        fs::create_directories(dir.summaries_dir(model->model_id));
        for (std::size_t i = 0; i < forms.size(); ++i) {
            const PairStatus status = manifest.statuses[model->model_id][forms[i].form_id];
            if (status != PairStatus::completed) tasks.push_back({model, i});
        }
    }

    std::mutex state_mu;  // guards records, manifest, and persistence below
    std::atomic<std::size_t> next_task{0};
    std::atomic<bool> any_failed{false};

    auto worker = [&] {
        while (true) {
            const std::size_t t = next_task.fetch_add(1);
            if (t >= tasks.size()) return;
            const Task& task = tasks[t];
            const PatientForm& form = forms[task.form_index];
            const GroundTruth& truth = truths[task.form_index];
            const ModelConfig& model = *task.model;

            try {
                const PromptMessages prompt = build_summarizer_prompt(bank, form);
                MockContext ctx{&bank, &form, &truth, false, nullptr};
                const bool is_mock = model.backend != BackendKind::http_chat;
                const CompletionResult completion =
                    gateway.complete(model, prompt, is_mock ? &ctx : nullptr);

                atomic_write_file(dir.summaries_dir(model.model_id) / (form.form_id + ".txt"),
                                  completion.text);

                std::optional<double> grade;
                if (manifest.judge) {
                    auto outcome =
                        judge_summary(gateway, *manifest.judge, bank, form, truth, completion.text);
                    if (outcome) grade = outcome->grade;
                }

                MetricRecord record = score_summary(bank, form, truth, completion.text, grade,
                                                    manifest.options.recall_formula);
                record.model_id = model.model_id;

                std::lock_guard lock(state_mu);
                records[model.model_id][form.form_id] = std::move(record);
                manifest.statuses[model.model_id][form.form_id] = PairStatus::completed;
                dir.save_records(model.model_id, manifest, records[model.model_id]);
                dir.save_manifest(manifest);
            } catch (const Error&) {
                any_failed = true;
                std::lock_guard lock(state_mu);
                manifest.statuses[model.model_id][form.form_id] = PairStatus::failed;
                dir.save_manifest(manifest);
            }
        }
    };

    const std::size_t thread_count =
        std::min<std::size_t>(static_cast<std::size_t>(manifest.options.concurrency),
                              std::max<std::size_t>(tasks.size(), 1));
    std::vector<std::thread> threads;
    threads.reserve(thread_count);
    for (std::size_t i = 0; i < thread_count; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();

    return any_failed ? 1 : 0;
}

/// Scores externally produced summaries against the run's ground truths.
/// The summaries file is line-delimited JSON: {"form_id", "summary",
/// optional "judge_grade", optional "model_id" (default "external")}.
inline void cmd_score(const fs::path& run_dir, const fs::path& summaries_path) {
    RunDirectory dir(run_dir);
    const RunManifest manifest = dir.load_manifest();
    const QuestionBank bank = dir.load_bank_checked(manifest);
    const std::vector<PatientForm> forms = dir.load_forms(manifest);
    const std::vector<GroundTruth> truths = dir.load_truths(manifest);

    std::map<std::string, std::size_t> form_index;
    for (std::size_t i = 0; i < forms.size(); ++i) form_index[forms[i].form_id] = i;

    std::map<std::string, std::map<std::string, MetricRecord>> records_by_model;
    std::istringstream in(read_file(summaries_path));
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        std::string form_id, model_id, summary;
        std::optional<double> grade;
        try {
            const auto j = ordered_json::parse(line);
            form_id = j.at("form_id").get<std::string>();
            summary = j.at("summary").get<std::string>();
            model_id = j.value("model_id", "external");
            if (j.contains("judge_grade") && !j["judge_grade"].is_null())
                grade = j["judge_grade"].get<double>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(summaries_path.string() + ":" + std::to_string(line_no) +
                              ": malformed summary line: " + e.what());
        }
        auto it = form_index.find(form_id);
        if (it == form_index.end())
            throw Error("summaries file names unknown form_id '" + form_id + "'");
        if (records_by_model[model_id].count(form_id))
            throw Error("summaries file has a duplicate entry for (" + model_id + ", " + form_id + ")");

        MetricRecord record = score_summary(bank, forms[it->second], truths[it->second], summary, grade,
                                            manifest.options.recall_formula);
        record.model_id = model_id;
        records_by_model[model_id][form_id] = std::move(record);
    }
    if (records_by_model.empty()) throw Error("summaries file is empty: " + summaries_path.string());

    for (const auto& [model_id, records] : records_by_model)
        dir.save_records(model_id, manifest, records);
}

/// Aggregates every record file into the report tables and score
/// distributions. Model order: manifest order first, then any externally
/// scored models in lexicographic order.
inline void cmd_report(const fs::path& run_dir) {
    RunDirectory dir(run_dir);
    const RunManifest manifest = dir.load_manifest();

    std::vector<std::pair<std::string, std::vector<MetricRecord>>> records_by_model;
    std::set<std::string> seen;
    auto collect = [&](const std::string& model_id) {
        if (seen.count(model_id)) return;
        auto records = dir.load_records(model_id);
        if (records.empty()) return;
        seen.insert(model_id);
        std::vector<MetricRecord> ordered;
        ordered.reserve(records.size());
        for (int i = 0; i < manifest.cohort_size; ++i) {
            auto it = records.find("form_" + std::to_string(i));
            if (it != records.end()) ordered.push_back(it->second);
        }
        records_by_model.emplace_back(model_id, std::move(ordered));
    };

    for (const auto& model : manifest.models) collect(model.model_id);
    if (fs::exists(dir.records_dir())) {
        std::vector<std::string> extra;
        for (const auto& entry : fs::directory_iterator(dir.records_dir())) {
            if (entry.path().extension() != ".recs") continue;
            std::istringstream in(read_file(entry.path()));
            std::string line;
            while (std::getline(in, line)) {
                if (trim(line).empty()) continue;
                try {
                    extra.push_back(ordered_json::parse(line).at("model_id").get<std::string>());
                } catch (const nlohmann::json::exception&) {
                }
                break;
            }
        }
        std::sort(extra.begin(), extra.end());
        for (const auto& model_id : extra) collect(model_id);
    }

    std::size_t total = 0;
    for (const auto& [_, records] : records_by_model) total += records.size();
    if (total == 0) throw Error("run has no records to report: " + run_dir.string());

    std::vector<ModelStats> stats;
    stats.reserve(records_by_model.size());
    for (const auto& [model_id, records] : records_by_model)
        stats.push_back(build_model_stats(model_id, records, manifest.options.policy));

    fs::create_directories(dir.report_dir());
    atomic_write_file(dir.report_dir() / "tables.md", emit_tables(stats, TableFormat::markdown));
    atomic_write_file(dir.report_dir() / "tables.csv", emit_tables(stats, TableFormat::csv));
    atomic_write_file(dir.report_dir() / "distributions.csv",
                      emit_distributions_csv(records_by_model, manifest.options.policy));
}

}  // namespace prosumm
