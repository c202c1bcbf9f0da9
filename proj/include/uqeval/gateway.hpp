#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "uqeval/jsonl.hpp"
#include "uqeval/rng.hpp"

namespace uqeval {

struct ChatMessage {
    std::string role;   // "system" or "user"
    std::string text;

    bool operator==(const ChatMessage&) const = default;
};

struct CompletionRequest {
    std::string model_id;
    std::vector<ChatMessage> prompt_messages;
    int max_new_tokens = 16;
    double temperature = 0.0;
    bool want_token_distributions = false;
    int top_k_logprobs = 0;   // 0 = full distribution if the backend has it
};

struct TokenEntry {
    std::string token_text;
    double logprob;   // <= 0
};

// Per-position token probability data. Entries are kept sorted by logprob,
// non-increasing; observed mass never exceeds 1 + 1e-6.
struct TokenDistribution {
    int position = 0;
    std::vector<TokenEntry> entries;
    bool coverage_is_full_vocab = false;
};

struct CompletionResponse {
    std::string text;
    std::vector<TokenDistribution> token_distributions;
    std::map<std::string, std::string> backend_metadata;
};

// Throws UqError(validation) when request invariants are violated.
void validate_request(const CompletionRequest& req);

// Sorts entries (logprob descending, token_text as tiebreak) and enforces the
// TokenDistribution invariants. Throws UqError(data) on violation.
void canonicalize_distribution(TokenDistribution& dist);

// SHA-256 over length-framed role/text pairs; the scripting key for mocks.
std::string prompt_fingerprint(const std::vector<ChatMessage>& messages);

json response_to_json(const CompletionResponse& resp);
CompletionResponse response_from_json(const json& j);

class Backend {
public:
    virtual ~Backend() = default;
    // Throws UqError: transport (retryable), request (4xx), capability.
    virtual CompletionResponse complete(const CompletionRequest& req) = 0;
    virtual std::string name() const = 0;
};

enum class MissPolicy { error, fallback };

// Scripted responses keyed by prompt fingerprint. An entry may hold several
// responses consumed call by call (the last one repeats); single-entry
// scripts make the mock a pure function of the prompt.
struct MockScript {
    std::map<std::string, std::vector<CompletionResponse>> responses;
    MissPolicy miss_policy = MissPolicy::error;
    std::optional<CompletionResponse> fallback;

    void add(const std::vector<ChatMessage>& prompt, CompletionResponse resp);
    void add_sequence(const std::vector<ChatMessage>& prompt, std::vector<CompletionResponse> seq);

    json to_json() const;
    static MockScript from_json(const json& j);
    static MockScript load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
};

class ScriptedMockBackend : public Backend {
public:
    explicit ScriptedMockBackend(MockScript script);
    CompletionResponse complete(const CompletionRequest& req) override;
    std::string name() const override { return "mock"; }

private:
    MockScript script_;
    std::mutex mu_;
    std::map<std::string, std::size_t> calls_;
};

// Deterministically injects transport failures in front of another backend:
// the decision for (fingerprint, per-fingerprint attempt ordinal) is a pure
// function of the seed, so retried runs reproduce byte-identical outputs.
class FailureInjectingBackend : public Backend {
public:
    FailureInjectingBackend(std::shared_ptr<Backend> inner, double failure_rate, std::uint64_t seed);
    CompletionResponse complete(const CompletionRequest& req) override;
    std::string name() const override;

private:
    std::shared_ptr<Backend> inner_;
    double rate_;
    std::uint64_t seed_;
    std::mutex mu_;
    std::map<std::string, std::uint64_t> attempts_;
};

struct RetryPolicy {
    int max_attempts = 5;
    double initial_backoff_s = 0.5;
    double backoff_multiplier = 2.0;
    double max_backoff_s = 8.0;
    double jitter_frac = 0.1;
    std::uint64_t jitter_seed = 0;
};

struct GatewayOptions {
    int max_in_flight = 4;
    double requests_per_second = 0.0;   // <= 0 means unlimited
    RetryPolicy retry;
};

// Shared front door to a backend: request validation, bounded in-flight
// concurrency, request rate limiting, retry with exponential backoff and
// jitter on transport errors. Attempt count lands in backend_metadata.
class Gateway {
public:
    Gateway(std::shared_ptr<Backend> backend, GatewayOptions options);

    CompletionResponse complete(const CompletionRequest& req);

    const GatewayOptions& options() const { return options_; }

private:
    void acquire_slot();
    void release_slot();
    void rate_limit_wait();

    std::shared_ptr<Backend> backend_;
    GatewayOptions options_;

    std::mutex slots_mu_;
    std::condition_variable slots_cv_;
    int in_flight_ = 0;

    std::mutex rate_mu_;
    std::chrono::steady_clock::time_point next_slot_{};

    std::mutex jitter_mu_;
    SplitMix64 jitter_rng_;
};

} // namespace uqeval
