#include "reasonlab/gateway.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "reasonlab/errors.hpp"
#include "reasonlab/util.hpp"

namespace reasonlab {

using nlohmann::json;
using Clock = std::chrono::steady_clock;

bool mock_bernoulli_success(std::uint64_t rule_seed, const std::string& prompt,
                            std::uint64_t trial_seed, double p_success) {
    const std::uint64_t word = util::splitmix64(
        util::splitmix64(rule_seed) ^ util::splitmix64(trial_seed) ^
        util::fnv1a64(prompt));
    return util::uniform01(word) < p_success;
}

void SolverProfile::validate() const {
    if (name.empty()) throw ConfigError("profile needs a name");
    if (temperature < 0) throw ConfigError("profile '" + name + "': temperature < 0");
    if (max_output_tokens <= 0) {
        throw ConfigError("profile '" + name + "': max_output_tokens must be positive");
    }
    if (max_parallel < 1) {
        throw ConfigError("profile '" + name + "': max_parallel must be >= 1");
    }
    if (endpoint_kind == EndpointKind::RemoteChat && base_url.empty()) {
        throw ConfigError("profile '" + name + "': remote endpoint needs a base_url");
    }
}

SolverProfile mock_solver(MockScript script, std::string name) {
    SolverProfile profile;
    profile.name = std::move(name);
    profile.endpoint_kind = EndpointKind::Mock;
    profile.model_id = "mock:" + profile.name;
    profile.mock = std::move(script);
    return profile;
}

// Dynamic-count semaphore; std::counting_semaphore fixes the ceiling at
// compile time.
class SolverGateway::Semaphore {
public:
    explicit Semaphore(int count) : count_(count) {}

    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return count_ > 0; });
        --count_;
    }

    void release() {
        {
            std::lock_guard lock(mutex_);
            ++count_;
        }
        cv_.notify_one();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int count_;
};

namespace {

class SemaphoreGuard {
public:
    explicit SemaphoreGuard(SolverGateway::Semaphore& sem) : sem_(sem) { sem_.acquire(); }
    ~SemaphoreGuard() { sem_.release(); }
    SemaphoreGuard(const SemaphoreGuard&) = delete;
    SemaphoreGuard& operator=(const SemaphoreGuard&) = delete;

private:
    SolverGateway::Semaphore& sem_;
};

json record_to_json(const GenerationRecord& r) {
    return json{{"prompt_text", r.prompt_text},
                {"output_text", r.output_text},
                {"prompt_tokens", r.prompt_tokens},
                {"output_tokens", r.output_tokens},
                {"tokens_approximate", r.tokens_approximate},
                {"trial_seed", r.trial_seed}};
}

GenerationRecord record_from_json(const json& j) {
    GenerationRecord r;
    r.prompt_text = j.value("prompt_text", std::string{});
    r.output_text = j.value("output_text", std::string{});
    r.prompt_tokens = j.value("prompt_tokens", 0);
    r.output_tokens = j.value("output_tokens", 0);
    r.tokens_approximate = j.value("tokens_approximate", false);
    r.trial_seed = j.value("trial_seed", std::uint64_t{0});
    return r;
}

bool rule_matches(const MockRule& rule, const std::string& prompt) {
    if (rule.match_fn) return rule.match_fn(prompt);
    for (const std::string& needle : rule.match_all) {
        if (prompt.find(needle) == std::string::npos) return false;
    }
    return true;
}

// base_url like "https://host:port/v1" -> origin + path prefix.
std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    std::size_t scheme_end = base_url.find("://");
    std::size_t path_start = base_url.find(
        '/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

}  // namespace

SolverGateway::SolverGateway(Options options) : options_(std::move(options)) {}

std::string SolverGateway::cache_key(const SolverProfile& profile,
                                     const std::string& prompt,
                                     std::uint64_t trial_seed) {
    const json key = {{"model_id", profile.model_id},
                      {"prompt", prompt},
                      {"temperature", profile.temperature},
                      {"max_output_tokens", profile.max_output_tokens},
                      {"trial_seed", trial_seed}};
    return util::sha256_hex(key.dump());
}

std::optional<GenerationRecord> SolverGateway::cache_lookup(
    const std::string& key) const {
    if (options_.cache_dir.empty()) return std::nullopt;
    const auto path = options_.cache_dir / key.substr(0, 2) / (key + ".json");
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    try {
        json j;
        in >> j;
        return record_from_json(j);
    } catch (const json::exception&) {
        return std::nullopt;  // corrupt entry: treat as miss, it will be rewritten
    }
}

void SolverGateway::cache_store(const std::string& key,
                                const GenerationRecord& record) const {
    if (options_.cache_dir.empty()) return;
    const auto path = options_.cache_dir / key.substr(0, 2) / (key + ".json");
    util::atomic_write_file(path, record_to_json(record).dump(2));
}

SolverGateway::Semaphore& SolverGateway::profile_semaphore(
    const SolverProfile& profile) {
    std::lock_guard lock(semaphores_mutex_);
    auto it = semaphores_.find(profile.name);
    if (it == semaphores_.end()) {
        it = semaphores_
                 .emplace(profile.name,
                          std::make_unique<Semaphore>(profile.max_parallel))
                 .first;
    }
    return *it->second;
}

GenerationRecord SolverGateway::generate(const SolverProfile& profile,
                                         const std::string& prompt,
                                         std::uint64_t trial_seed) {
    profile.validate();
    if (prompt.empty()) throw ConfigError("generate: empty prompt");

    const std::string key = cache_key(profile, prompt, trial_seed);
    const auto start = Clock::now();
    if (auto cached = cache_lookup(key)) {
        cached->cache_hit = true;
        cached->latency_ms =
            std::chrono::duration<double, std::milli>(Clock::now() - start).count();
        cache_hits_.fetch_add(1);
        return *cached;
    }

    GenerationRecord record;
    {
        SemaphoreGuard guard(profile_semaphore(profile));
        backend_calls_.fetch_add(1);
        record = call_backend(profile, prompt, trial_seed);
    }
    record.trial_seed = trial_seed;
    record.cache_hit = false;
    record.latency_ms =
        std::chrono::duration<double, std::milli>(Clock::now() - start).count();
    cache_store(key, record);
    return record;
}

GenerationRecord SolverGateway::call_backend(const SolverProfile& profile,
                                             const std::string& prompt,
                                             std::uint64_t trial_seed) {
    switch (profile.endpoint_kind) {
        case EndpointKind::Mock: return call_mock(profile, prompt, trial_seed);
        case EndpointKind::RemoteChat: return call_remote(profile, prompt, trial_seed);
    }
    throw ConfigError("unknown endpoint kind");
}

GenerationRecord SolverGateway::call_mock(const SolverProfile& profile,
                                          const std::string& prompt,
                                          std::uint64_t trial_seed) {
    for (const MockRule& rule : profile.mock.rules) {
        if (!rule_matches(rule, prompt)) continue;
        GenerationRecord record;
        record.prompt_text = prompt;
        if (rule.respond_fn) {
            record.output_text = rule.respond_fn(prompt, trial_seed);
        } else if (rule.p_success.has_value()) {
            record.output_text =
                mock_bernoulli_success(rule.rule_seed, prompt, trial_seed,
                                       *rule.p_success)
                    ? rule.success_response
                    : rule.failure_response;
        } else {
            record.output_text = rule.response;
        }
        record.prompt_tokens = util::approx_token_count(prompt);
        record.output_tokens = util::approx_token_count(record.output_text);
        record.tokens_approximate = true;
        return record;
    }
    throw GatewayError(GatewayError::Kind::ScriptedMiss,
                       "mock profile '" + profile.name +
                           "' has no rule matching prompt: " +
                           prompt.substr(0, 120));
}

GenerationRecord SolverGateway::call_remote(const SolverProfile& profile,
                                            const std::string& prompt,
                                            std::uint64_t trial_seed) {
    const auto [origin, path_prefix] = split_base_url(profile.base_url);
    const std::string path = path_prefix + "/chat/completions";

    json body = {{"model", profile.model_id},
                 {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
                 {"temperature", profile.temperature},
                 {"max_tokens", profile.max_output_tokens},
                 {"seed", trial_seed}};
    const std::string payload = body.dump();

    std::string api_key;
    if (!profile.api_key_env.empty()) {
        if (const char* value = std::getenv(profile.api_key_env.c_str())) {
            api_key = value;
        }
    }

    std::string last_error;
    for (int attempt = 0; attempt <= options_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(options_.retry_backoff * attempt);
        }

        httplib::Client client(origin);
        const auto timeout =
            std::chrono::duration_cast<std::chrono::seconds>(profile.request_timeout);
        client.set_connection_timeout(timeout.count() > 0 ? timeout.count() : 1, 0);
        client.set_read_timeout(timeout.count() > 0 ? timeout.count() : 1, 0);
        httplib::Headers headers;
        if (!api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + api_key);
        }

        auto res = client.Post(path, headers, payload, "application/json");
        if (!res) {
            const auto err = res.error();
            if (err == httplib::Error::ConnectionTimeout ||
                err == httplib::Error::Read || err == httplib::Error::Write) {
                last_error = "timeout talking to " + origin;
                if (attempt == options_.max_retries) {
                    throw GatewayError(GatewayError::Kind::Timeout, last_error);
                }
            } else {
                last_error = "transport error talking to " + origin + ": " +
                             httplib::to_string(err);
                if (attempt == options_.max_retries) {
                    throw GatewayError(GatewayError::Kind::Transport, last_error);
                }
            }
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "endpoint returned " + std::to_string(res->status);
            if (attempt == options_.max_retries) {
                throw GatewayError(GatewayError::Kind::Endpoint, last_error, res->status);
            }
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            throw GatewayError(GatewayError::Kind::Endpoint,
                               "endpoint returned " + std::to_string(res->status) +
                                   ": " + res->body.substr(0, 200),
                               res->status);
        }

        json reply;
        try {
            reply = json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw GatewayError(GatewayError::Kind::Endpoint,
                               std::string("unparseable endpoint reply: ") + e.what());
        }

        GenerationRecord record;
        record.prompt_text = prompt;
        try {
            record.output_text =
                reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            throw GatewayError(GatewayError::Kind::Endpoint,
                               "endpoint reply lacks choices[0].message.content");
        }
        if (reply.contains("usage") && reply["usage"].is_object()) {
            const json& usage = reply["usage"];
            record.prompt_tokens = usage.value("prompt_tokens", 0);
            record.output_tokens = usage.value("completion_tokens", 0);
            record.tokens_approximate = false;
        }
        if (record.output_tokens == 0 && !record.output_text.empty()) {
            record.prompt_tokens = util::approx_token_count(prompt);
            record.output_tokens = util::approx_token_count(record.output_text);
            record.tokens_approximate = true;
        }
        return record;
    }
    throw GatewayError(GatewayError::Kind::Transport, last_error);
}

}  // namespace reasonlab
