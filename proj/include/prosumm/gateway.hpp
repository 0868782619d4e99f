#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "prosumm/cohort.hpp"
#include "prosumm/error.hpp"
#include "prosumm/metrics.hpp"
#include "prosumm/prompts.hpp"
#include "prosumm/rng.hpp"
#include "prosumm/text.hpp"

namespace prosumm {

enum class BackendKind { http_chat, mock_perfect, mock_lossy, mock_hallucinating };

inline const char* to_string(BackendKind k) {
    switch (k) {
        case BackendKind::http_chat: return "http_chat";
        case BackendKind::mock_perfect: return "mock_perfect";
        case BackendKind::mock_lossy: return "mock_lossy";
        case BackendKind::mock_hallucinating: return "mock_hallucinating";
    }
    return "?";
}

inline std::optional<BackendKind> backend_kind_from(std::string_view name) {
    if (name == "http_chat") return BackendKind::http_chat;
    if (name == "mock_perfect") return BackendKind::mock_perfect;
    if (name == "mock_lossy") return BackendKind::mock_lossy;
    if (name == "mock_hallucinating") return BackendKind::mock_hallucinating;
    return std::nullopt;
}

struct MockParams {
    int drop_count = 0;
    int add_count = 0;
    std::uint64_t mock_seed = 0;
};

struct ModelConfig {
    std::string model_id;
    BackendKind backend = BackendKind::http_chat;
    std::string endpoint_url;   // required for http_chat, full URL including path
    std::string api_key_env;    // env var holding the bearer token, optional
    double temperature = 0.7;
    int max_tokens = 200;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 2;
    std::chrono::milliseconds backoff_initial{1000};
    MockParams mock;

    void validate() const {
        if (model_id.empty()) throw ConfigError("model config: empty model_id");
        if (backend == BackendKind::http_chat && endpoint_url.empty())
            throw ConfigError("model '" + model_id + "': http_chat requires endpoint_url");
        if (temperature < 0.0)
            throw ConfigError("model '" + model_id + "': temperature must be >= 0");
        if (max_tokens <= 0)
            throw ConfigError("model '" + model_id + "': max_tokens must be > 0");
        if (max_retries < 0)
            throw ConfigError("model '" + model_id + "': max_retries must be >= 0");
        if (mock.drop_count < 0 || mock.add_count < 0)
            throw ConfigError("model '" + model_id + "': mock counts must be >= 0");
    }
};

struct CompletionResult {
    std::string text;  // raw reply, unmodified
    std::chrono::milliseconds latency{0};
    int attempts = 0;
    bool from_cache = false;
};

// ---------------------------------------------------------------------------
// Mock oracles
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> group_names_in_bank_order(const QuestionBank& bank,
                                                          const std::set<std::string>& ids) {
    std::vector<std::string> names;
    for (const auto& g : bank.groups)
        if (ids.count(g.group_id)) names.push_back(g.display_name);
    return names;
}

inline std::string oracle_sentence(int treatments, const std::vector<std::string>& names,
                                   const std::optional<std::string>& free_text) {
    std::string out = "This patient, after " + std::to_string(treatments) + " radiation treatments, ";
    if (names.empty()) {
        out += "reports no severe symptoms.";
    } else {
        out += "reports severe symptoms including " + join_natural(names) + ".";
    }
    if (free_text) out += " The patient also mentioned " + *free_text + ".";
    return out;
}

}  // namespace detail

/// Reference summary: mentions every severe group's display name exactly once,
/// the treatment count, and the free text verbatim; nothing else.
inline std::string perfect_oracle(const QuestionBank& bank, const PatientForm& form,
                                  const GroundTruth& truth) {
    return detail::oracle_sentence(
        form.treatments, detail::group_names_in_bank_order(bank, truth.severe_groups), form.free_text);
}

/// Perfect-oracle text with drop_count severe groups omitted (seeded draw).
inline std::string lossy_oracle(const QuestionBank& bank, const PatientForm& form,
                                const GroundTruth& truth, int drop_count, std::uint64_t mock_seed) {
    if (drop_count < 0 || static_cast<std::size_t>(drop_count) > truth.severe_groups.size())
        throw ConfigError("lossy oracle: drop_count " + std::to_string(drop_count) +
                          " out of range for " + std::to_string(truth.severe_groups.size()) +
                          " severe groups");
    std::vector<std::string> severe_ids;
    for (const auto& g : bank.groups)
        if (truth.severe_groups.count(g.group_id)) severe_ids.push_back(g.group_id);

    Rng rng(Rng::mix(mock_seed, fnv1a64(form.form_id)));
    std::set<std::size_t> dropped;
    for (std::size_t i : rng.sample_distinct(severe_ids.size(), static_cast<std::size_t>(drop_count)))
        dropped.insert(i);

    std::set<std::string> kept;
    for (std::size_t i = 0; i < severe_ids.size(); ++i)
        if (!dropped.count(i)) kept.insert(severe_ids[i]);
    return detail::oracle_sentence(form.treatments,
                                   detail::group_names_in_bank_order(bank, kept), form.free_text);
}

/// Perfect-oracle text plus add_count non-severe groups presented as severe.
inline std::string hallucinating_oracle(const QuestionBank& bank, const PatientForm& form,
                                        const GroundTruth& truth, int add_count,
                                        std::uint64_t mock_seed) {
    std::vector<std::string> benign_ids;
    for (const auto& g : bank.groups)
        if (!truth.severe_groups.count(g.group_id)) benign_ids.push_back(g.group_id);
    if (add_count < 0 || static_cast<std::size_t>(add_count) > benign_ids.size())
        throw ConfigError("hallucinating oracle: add_count " + std::to_string(add_count) +
                          " out of range for " + std::to_string(benign_ids.size()) +
                          " non-severe groups");

    Rng rng(Rng::mix(mock_seed ^ 0x68616c6cULL, fnv1a64(form.form_id)));
    std::set<std::string> mentioned = truth.severe_groups;
    for (std::size_t i : rng.sample_distinct(benign_ids.size(), static_cast<std::size_t>(add_count)))
        mentioned.insert(benign_ids[i]);
    return detail::oracle_sentence(form.treatments,
                                   detail::group_names_in_bank_order(bank, mentioned), form.free_text);
}

/// Call context handed to mock backends by the evaluation driver. Mocks
/// synthesize replies from the form itself rather than parsing the prompt.
struct MockContext {
    const QuestionBank* bank = nullptr;
    const PatientForm* form = nullptr;
    const GroundTruth* truth = nullptr;
    bool judge_call = false;
    const std::string* candidate_summary = nullptr;  // set for judge calls
};

// ---------------------------------------------------------------------------
// Gateway
// ---------------------------------------------------------------------------

namespace detail {

class Semaphore {
public:
    explicit Semaphore(int slots) : slots_(slots) {}
    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return slots_ > 0; });
        --slots_;
    }
    void release() {
        {
            std::lock_guard lock(mu_);
            ++slots_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    int slots_;
};

struct SemaphoreGuard {
    Semaphore& sem;
    explicit SemaphoreGuard(Semaphore& s) : sem(s) { sem.acquire(); }
    ~SemaphoreGuard() { sem.release(); }
};

struct ParsedUrl {
    std::string base;  // scheme://host[:port]
    std::string path;  // leading slash
    bool https = false;
};

inline ParsedUrl parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("endpoint URL must start with http:// or https://: " + url);
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw ConfigError("unsupported URL scheme '" + scheme + "' in " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    ParsedUrl out;
    out.https = (scheme == "https");
    if (path_start == std::string::npos) {
        out.base = url;
        out.path = "/v1/chat/completions";
    } else {
        out.base = url.substr(0, path_start);
        out.path = url.substr(path_start);
    }
    return out;
}

inline std::string iso8601_utc_now() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace detail

/// Hash key identifying one completion request. Stable across processes, so
/// the on-disk cache survives restarts.
inline std::string completion_cache_key(const ModelConfig& config, const PromptMessages& prompt,
                                        std::string_view extra = {}) {
    char temp_buf[32];
    std::snprintf(temp_buf, sizeof(temp_buf), "%.17g", config.temperature);
    std::uint64_t h = fnv1a64(config.model_id);
    h = fnv1a64("\x1f", h);
    h = fnv1a64(temp_buf, h);
    h = fnv1a64("\x1f" + std::to_string(config.max_tokens), h);
    for (const auto& m : prompt.messages) {
        h = fnv1a64("\x1e" + m.role + "\x1f", h);
        h = fnv1a64(m.content, h);
    }
    if (!extra.empty()) h = fnv1a64("\x1d", fnv1a64(extra, h));
    return to_hex(h);
}

/// Uniform access to summarizer and judge backends: dispatches mock oracles,
/// runs the chat-completion wire protocol with retry, caches replies, and
/// de-duplicates identical in-flight requests.
class ModelGateway {
public:
    /// cache_dir may be empty for a memory-only cache.
    explicit ModelGateway(std::filesystem::path cache_dir = {}, int per_endpoint_concurrency = 4)
        : cache_dir_(std::move(cache_dir)), per_endpoint_limit_(per_endpoint_concurrency) {
        if (!cache_dir_.empty()) std::filesystem::create_directories(cache_dir_);
    }

    /// cache_key_extra feeds the cache key only; re-asks use it to avoid
    /// replaying a cached unparseable reply.
    CompletionResult complete(const ModelConfig& config, const PromptMessages& prompt,
                              const MockContext* ctx = nullptr, std::string_view cache_key_extra = {}) {
        config.validate();
        if (prompt.messages.empty()) throw ConfigError("complete: empty prompt");

        if (config.backend != BackendKind::http_chat) {
            return mock_complete(config, ctx);
        }

        const std::string key = completion_cache_key(config, prompt, cache_key_extra);
        if (auto cached = cache_lookup(key)) {
            return CompletionResult{*cached, std::chrono::milliseconds(0), 0, true};
        }

        // In-flight de-duplication: a second identical request waits for the
        // first instead of hitting the network.
        std::shared_future<std::string> future;
        bool leader = false;
        {
            std::lock_guard lock(inflight_mu_);
            auto it = inflight_.find(key);
            if (it != inflight_.end()) {
                future = it->second;
            } else {
                std::promise<std::string> promise;
                future = promise.get_future().share();
                inflight_.emplace(key, future);
                inflight_promises_[key] = std::move(promise);
                leader = true;
            }
        }
        if (!leader) {
            return CompletionResult{future.get(), std::chrono::milliseconds(0), 0, true};
        }

        try {
            CompletionResult result = http_complete(config, prompt);
            cache_store(key, config.model_id, result.text);
            settle_inflight(key, result.text, nullptr);
            return result;
        } catch (...) {
            settle_inflight(key, {}, std::current_exception());
            throw;
        }
    }

private:
    CompletionResult mock_complete(const ModelConfig& config, const MockContext* ctx) {
        if (!ctx || !ctx->bank || !ctx->form || !ctx->truth)
            throw ConfigError("model '" + config.model_id +
                              "': mock backends require a form-aware call context");
        std::string text;
        if (ctx->judge_call) {
            if (!ctx->candidate_summary)
                throw ConfigError("model '" + config.model_id + "': mock judge call without a summary");
            // Deterministic numeric grade: the candidate's severity score.
            const MatchResult match = match_keywords(*ctx->candidate_summary, ctx->bank->groups);
            char buf[16];
            std::snprintf(buf, sizeof(buf), "%.4f", severity_score(*ctx->truth, match).value);
            text = buf;
        } else {
            switch (config.backend) {
                case BackendKind::mock_perfect:
                    text = perfect_oracle(*ctx->bank, *ctx->form, *ctx->truth);
                    break;
                case BackendKind::mock_lossy: {
                    // Cohort runs clamp to the feasible range; the bare oracle
                    // functions keep their strict contracts.
                    const int drop = std::min<int>(config.mock.drop_count,
                                                   static_cast<int>(ctx->truth->severe_groups.size()));
                    text = lossy_oracle(*ctx->bank, *ctx->form, *ctx->truth, drop, config.mock.mock_seed);
                    break;
                }
                case BackendKind::mock_hallucinating: {
                    const int benign = static_cast<int>(ctx->bank->groups.size()) -
                                       static_cast<int>(ctx->truth->severe_groups.size());
                    const int add = std::min<int>(config.mock.add_count, benign);
                    text = hallucinating_oracle(*ctx->bank, *ctx->form, *ctx->truth, add,
                                                config.mock.mock_seed);
                    break;
                }
                default:
                    throw ConfigError("unexpected backend");
            }
        }
        return CompletionResult{std::move(text), std::chrono::milliseconds(0), 1, false};
    }

    CompletionResult http_complete(const ModelConfig& config, const PromptMessages& prompt) {
        const detail::ParsedUrl url = detail::parse_url(config.endpoint_url);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
        if (url.https)
            throw BackendError("model '" + config.model_id +
                               "': built without TLS support, use an http:// endpoint");
#endif
        httplib::Headers headers = {{"Content-Type", "application/json"}};
        if (!config.api_key_env.empty()) {
            const char* key = std::getenv(config.api_key_env.c_str());
            if (!key || !*key)
                throw ConfigError("model '" + config.model_id + "': environment variable " +
                                  config.api_key_env + " is not set");
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }

        ordered_json body;
        body["model"] = config.model_id;
        body["messages"] = ordered_json::array();
        for (const auto& m : prompt.messages)
            body["messages"].push_back({{"role", m.role}, {"content", m.content}});
        body["temperature"] = config.temperature;
        body["max_tokens"] = config.max_tokens;
        const std::string payload = body.dump();

        detail::Semaphore& sem = endpoint_semaphore(url.base);
        detail::SemaphoreGuard guard(sem);

        const auto started = std::chrono::steady_clock::now();
        std::string last_error;
        int attempts = 0;
        for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
            if (attempt > 0) backoff_sleep(config, attempt);
            ++attempts;

            httplib::Client client(url.base);
            client.set_connection_timeout(config.timeout);
            client.set_read_timeout(config.timeout);
            client.set_write_timeout(config.timeout);
            auto res = client.Post(url.path, headers, payload, "application/json");
            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status < 200 || res->status >= 300) {
                last_error = "status " + std::to_string(res->status);
                continue;
            }
            const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - started);
            return CompletionResult{parse_chat_reply(config, res->body), latency, attempts, false};
        }
        throw BackendError("model '" + config.model_id + "': backend failed after " +
                           std::to_string(attempts) + " attempts (" + last_error + ")");
    }

    static std::string parse_chat_reply(const ModelConfig& config, const std::string& body) {
        try {
            const auto j = nlohmann::json::parse(body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError("model '" + config.model_id + "': malformed chat-completion reply: " +
                                e.what());
        }
    }

    void backoff_sleep(const ModelConfig& config, int attempt) {
        auto base = config.backoff_initial.count();
        for (int i = 1; i < attempt; ++i) base *= 2;
        base = std::min<long long>(base, 30000);
        // +/-20% jitter
        double jitter;
        {
            std::lock_guard lock(jitter_mu_);
            jitter = 0.8 + 0.4 * jitter_dist_(jitter_rng_);
        }
        const auto ms = static_cast<long long>(static_cast<double>(base) * jitter);
        std::this_thread::sleep_for(std::chrono::milliseconds(ms));
    }

    detail::Semaphore& endpoint_semaphore(const std::string& base) {
        std::lock_guard lock(sem_mu_);
        auto it = semaphores_.find(base);
        if (it == semaphores_.end())
            it = semaphores_.emplace(base, std::make_unique<detail::Semaphore>(per_endpoint_limit_)).first;
        return *it->second;
    }

    void settle_inflight(const std::string& key, const std::string& value, std::exception_ptr err) {
        std::promise<std::string> promise;
        {
            std::lock_guard lock(inflight_mu_);
            promise = std::move(inflight_promises_.at(key));
            inflight_promises_.erase(key);
            inflight_.erase(key);
        }
        if (err) promise.set_exception(err);
        else promise.set_value(value);
    }

    std::optional<std::string> cache_lookup(const std::string& key) {
        {
            std::lock_guard lock(cache_mu_);
            auto it = memory_cache_.find(key);
            if (it != memory_cache_.end()) return it->second;
        }
        if (cache_dir_.empty()) return std::nullopt;
        std::ifstream in(cache_dir_ / (key + ".txt"), std::ios::binary);
        if (!in) return std::nullopt;
        std::ostringstream buf;
        buf << in.rdbuf();
        const std::string content = buf.str();
        const auto sep = content.find("\n---\n");
        if (sep == std::string::npos) return std::nullopt;  // corrupt entry, treat as miss
        std::string text = content.substr(sep + 5);
        {
            std::lock_guard lock(cache_mu_);
            memory_cache_[key] = text;
        }
        return text;
    }

    void cache_store(const std::string& key, const std::string& model_id, const std::string& text) {
        {
            std::lock_guard lock(cache_mu_);
            memory_cache_[key] = text;
        }
        if (cache_dir_.empty()) return;
        const auto path = cache_dir_ / (key + ".txt");
        const auto tmp = cache_dir_ / (key + ".tmp");
        std::ofstream out(tmp, std::ios::binary);
        out << "prosumm-cache v1\n"
            << "model: " << model_id << "\n"
            << "created: " << detail::iso8601_utc_now() << "\n"
            << "---\n"
            << text;
        out.close();
        std::filesystem::rename(tmp, path);
    }

    std::filesystem::path cache_dir_;
    int per_endpoint_limit_;

    std::mutex cache_mu_;
    std::map<std::string, std::string> memory_cache_;

    std::mutex inflight_mu_;
    std::map<std::string, std::shared_future<std::string>> inflight_;
    std::map<std::string, std::promise<std::string>> inflight_promises_;

    std::mutex sem_mu_;
    std::map<std::string, std::unique_ptr<detail::Semaphore>> semaphores_;

    std::mutex jitter_mu_;
    std::mt19937_64 jitter_rng_{std::random_device{}()};
    std::uniform_real_distribution<double> jitter_dist_{0.0, 1.0};
};

}  // namespace prosumm
