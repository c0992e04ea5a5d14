#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace reasonlab {

enum class EndpointKind { RemoteChat, Mock };

// One scripted behavior of a mock backend. Rules are tried in order; the
// first whose matcher accepts the prompt responds. A rule either returns
// `response` verbatim or draws success/failure from a seeded Bernoulli.
struct MockRule {
    std::vector<std::string> match_all;  // all substrings must occur; empty matches any prompt
    std::function<bool(const std::string&)> match_fn;  // overrides match_all when set

    std::string response;
    std::optional<double> p_success;
    std::string success_response;
    std::string failure_response;
    std::uint64_t rule_seed = 0;

    // Overrides everything above when set; receives (prompt, trial_seed).
    std::function<std::string(const std::string&, std::uint64_t)> respond_fn;
};

struct MockScript {
    std::vector<MockRule> rules;
};

// The deterministic Bernoulli draw a stochastic mock rule makes for a given
// prompt and trial seed. Exposed so tests can replay the stream independently.
bool mock_bernoulli_success(std::uint64_t rule_seed, const std::string& prompt,
                            std::uint64_t trial_seed, double p_success);

// Describes one generation backend role (solver, planner, explanation
// generator, judge). Remote profiles speak the chat-completions JSON
// protocol; mock profiles are fully deterministic given their script.
struct SolverProfile {
    std::string name = "solver";
    EndpointKind endpoint_kind = EndpointKind::Mock;
    std::string model_id = "mock";
    double temperature = 0.4;
    int max_output_tokens = 1024;
    std::chrono::milliseconds request_timeout{60'000};
    int max_parallel = 4;

    // RemoteChat only. base_url may carry a path prefix ("https://host/v1");
    // the API key is read from the environment variable named here.
    std::string base_url;
    std::string api_key_env = "REASONLAB_API_KEY";

    MockScript mock;

    void validate() const;
};

// Convenience constructor for test and demo mocks.
SolverProfile mock_solver(MockScript script, std::string name = "mock-solver");

struct GenerationRecord {
    std::string prompt_text;
    std::string output_text;
    int prompt_tokens = 0;
    int output_tokens = 0;
    bool tokens_approximate = false;
    std::uint64_t trial_seed = 0;
    // Volatile fields: real on fresh calls, local-lookup values on cache
    // hits. Never serialized into run artifacts.
    double latency_ms = 0.0;
    bool cache_hit = false;
};

// Uniform access to generation backends with disk caching, bounded-parallel
// dispatch, and retry. Shareable across threads; cache writes are atomic.
class SolverGateway {
public:
    struct Options {
        std::filesystem::path cache_dir;  // empty disables the cache
        int max_retries = 2;              // transport/5xx retries per request
        std::chrono::milliseconds retry_backoff{250};
    };

    class Semaphore;  // dynamic-count; definition in gateway.cpp

    SolverGateway();
    explicit SolverGateway(Options options);
    ~SolverGateway();

    // Identical (model, prompt, temperature, max_tokens, trial_seed) tuples
    // replay from cache; distinct trial seeds are distinct cache entries.
    // Throws GatewayError on failure after retries.
    GenerationRecord generate(const SolverProfile& profile,
                              const std::string& prompt,
                              std::uint64_t trial_seed);

    // Backend consultations (cache misses that reached a mock script or the
    // wire). A warm-cache replay keeps this at zero.
    std::uint64_t backend_calls() const { return backend_calls_.load(); }
    std::uint64_t cache_hits() const { return cache_hits_.load(); }

    static std::string cache_key(const SolverProfile& profile,
                                 const std::string& prompt,
                                 std::uint64_t trial_seed);

private:
    class Semaphore;

    std::optional<GenerationRecord> cache_lookup(const std::string& key) const;
    void cache_store(const std::string& key, const GenerationRecord& record) const;
    GenerationRecord call_backend(const SolverProfile& profile,
                                  const std::string& prompt,
                                  std::uint64_t trial_seed);
    GenerationRecord call_remote(const SolverProfile& profile,
                                 const std::string& prompt,
                                 std::uint64_t trial_seed);
    static GenerationRecord call_mock(const SolverProfile& profile,
                                      const std::string& prompt,
                                      std::uint64_t trial_seed);
    Semaphore& profile_semaphore(const SolverProfile& profile);

    Options options_;
    std::atomic<std::uint64_t> backend_calls_{0};
    std::atomic<std::uint64_t> cache_hits_{0};
    std::mutex semaphores_mutex_;
    std::map<std::string, std::unique_ptr<Semaphore>> semaphores_;
};

}  // namespace reasonlab
