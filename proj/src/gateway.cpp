#include "uqeval/gateway.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "uqeval/errors.hpp"

namespace uqeval {

void validate_request(const CompletionRequest& req) {
    if (req.max_new_tokens < 1) {
        throw UqError(ErrorKind::validation, "max_new_tokens must be >= 1");
    }
    if (!(req.temperature >= 0.0)) {
        throw UqError(ErrorKind::validation, "temperature must be >= 0");
    }
    if (req.top_k_logprobs < 0 || req.top_k_logprobs > 64) {
        throw UqError(ErrorKind::validation, "top_k_logprobs must be in [0, 64]");
    }
    if (req.prompt_messages.empty()) {
        throw UqError(ErrorKind::validation, "prompt_messages must be non-empty");
    }
    for (const auto& m : req.prompt_messages) {
        if (m.role != "system" && m.role != "user") {
            throw UqError(ErrorKind::validation, "unknown message role '" + m.role + "'");
        }
    }
}

void canonicalize_distribution(TokenDistribution& dist) {
    if (dist.entries.empty()) {
        throw UqError(ErrorKind::data, "token distribution with no entries");
    }
    std::stable_sort(dist.entries.begin(), dist.entries.end(),
                     [](const TokenEntry& a, const TokenEntry& b) {
                         if (a.logprob != b.logprob) return a.logprob > b.logprob;
                         return a.token_text < b.token_text;
                     });
    double mass = 0.0;
    for (auto& e : dist.entries) {
        if (e.logprob > 0.0) {
            // servers occasionally emit +1e-9-ish values for certainty-1 tokens
            if (e.logprob > 1e-6) {
                throw UqError(ErrorKind::data, "logprob " + std::to_string(e.logprob) + " > 0");
            }
            e.logprob = 0.0;
        }
        mass += std::exp(e.logprob);
    }
    if (mass > 1.0 + 1e-6) {
        throw UqError(ErrorKind::data,
                      "distribution mass " + std::to_string(mass) + " exceeds 1");
    }
}

std::string prompt_fingerprint(const std::vector<ChatMessage>& messages) {
    // length-framed concatenation so (role, text) boundaries are unambiguous
    std::string buf;
    for (const auto& m : messages) {
        buf += std::to_string(m.role.size());
        buf += ':';
        buf += m.role;
        buf += std::to_string(m.text.size());
        buf += ':';
        buf += m.text;
    }
    return sha256_hex(buf);
}

json response_to_json(const CompletionResponse& resp) {
    json j;
    j["text"] = resp.text;
    json dists = json::array();
    for (const auto& d : resp.token_distributions) {
        json jd;
        jd["position"] = d.position;
        jd["coverage_is_full_vocab"] = d.coverage_is_full_vocab;
        json entries = json::array();
        for (const auto& e : d.entries) {
            entries.push_back(json{{"token", e.token_text}, {"logprob", e.logprob}});
        }
        jd["entries"] = std::move(entries);
        dists.push_back(std::move(jd));
    }
    j["token_distributions"] = std::move(dists);
    if (!resp.backend_metadata.empty()) {
        j["metadata"] = resp.backend_metadata;
    }
    return j;
}

CompletionResponse response_from_json(const json& j) {
    CompletionResponse resp;
    try {
        resp.text = j.at("text").get<std::string>();
        if (j.contains("token_distributions")) {
            for (const auto& jd : j.at("token_distributions")) {
                TokenDistribution d;
                d.position = jd.at("position").get<int>();
                d.coverage_is_full_vocab = jd.value("coverage_is_full_vocab", false);
                for (const auto& je : jd.at("entries")) {
                    d.entries.push_back({je.at("token").get<std::string>(),
                                         je.at("logprob").get<double>()});
                }
                canonicalize_distribution(d);
                resp.token_distributions.push_back(std::move(d));
            }
        }
        if (j.contains("metadata")) {
            resp.backend_metadata = j.at("metadata").get<std::map<std::string, std::string>>();
        }
    } catch (const json::exception& e) {
        throw UqError(ErrorKind::validation, std::string("malformed response record: ") + e.what());
    }
    return resp;
}

// ----- mock backend -----

void MockScript::add(const std::vector<ChatMessage>& prompt, CompletionResponse resp) {
    responses[prompt_fingerprint(prompt)] = {std::move(resp)};
}

void MockScript::add_sequence(const std::vector<ChatMessage>& prompt,
                              std::vector<CompletionResponse> seq) {
    responses[prompt_fingerprint(prompt)] = std::move(seq);
}

json MockScript::to_json() const {
    json j;
    j["miss_policy"] = miss_policy == MissPolicy::error ? "error" : "fallback";
    if (fallback) j["fallback"] = response_to_json(*fallback);
    json resp = json::object();
    for (const auto& [fp, seq] : responses) {
        json arr = json::array();
        for (const auto& r : seq) arr.push_back(response_to_json(r));
        resp[fp] = std::move(arr);
    }
    j["responses"] = std::move(resp);
    return j;
}

MockScript MockScript::from_json(const json& j) {
    MockScript s;
    const std::string policy = j.value("miss_policy", "error");
    if (policy == "fallback") {
        s.miss_policy = MissPolicy::fallback;
    } else if (policy != "error") {
        throw UqError(ErrorKind::validation, "unknown miss_policy '" + policy + "'");
    }
    if (j.contains("fallback")) s.fallback = response_from_json(j.at("fallback"));
    for (const auto& [fp, val] : j.at("responses").items()) {
        std::vector<CompletionResponse> seq;
        if (val.is_array()) {
            for (const auto& r : val) seq.push_back(response_from_json(r));
        } else {
            seq.push_back(response_from_json(val));
        }
        if (seq.empty()) {
            throw UqError(ErrorKind::validation, "empty response sequence for " + fp);
        }
        s.responses[fp] = std::move(seq);
    }
    return s;
}

MockScript MockScript::load(const std::filesystem::path& path) {
    json j = json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) {
        throw UqError(ErrorKind::validation, path.string() + ": invalid JSON");
    }
    return from_json(j);
}

void MockScript::save(const std::filesystem::path& path) const {
    atomic_write_file(path, to_json().dump() + "\n");
}

ScriptedMockBackend::ScriptedMockBackend(MockScript script) : script_(std::move(script)) {
    if (script_.responses.empty()) {
        throw UqError(ErrorKind::validation, "mock script must be non-empty");
    }
    if (script_.miss_policy == MissPolicy::fallback && !script_.fallback) {
        throw UqError(ErrorKind::validation, "fallback miss policy needs a fallback response");
    }
}

CompletionResponse ScriptedMockBackend::complete(const CompletionRequest& req) {
    const std::string fp = prompt_fingerprint(req.prompt_messages);
    const auto it = script_.responses.find(fp);
    if (it == script_.responses.end()) {
        if (script_.miss_policy == MissPolicy::fallback) {
            return *script_.fallback;
        }
        throw UqError(ErrorKind::validation, "mock script miss for fingerprint " + fp);
    }
    std::size_t ordinal;
    {
        std::lock_guard<std::mutex> lock(mu_);
        ordinal = calls_[fp]++;
    }
    const auto& seq = it->second;
    CompletionResponse resp = seq[std::min(ordinal, seq.size() - 1)];
    if (!req.want_token_distributions) {
        resp.token_distributions.clear();
    }
    return resp;
}

// ----- failure injection -----

FailureInjectingBackend::FailureInjectingBackend(std::shared_ptr<Backend> inner,
                                                 double failure_rate, std::uint64_t seed)
    : inner_(std::move(inner)), rate_(failure_rate), seed_(seed) {}

std::string FailureInjectingBackend::name() const {
    return "flaky(" + inner_->name() + ")";
}

CompletionResponse FailureInjectingBackend::complete(const CompletionRequest& req) {
    const std::string fp = prompt_fingerprint(req.prompt_messages);
    std::uint64_t ordinal;
    {
        std::lock_guard<std::mutex> lock(mu_);
        ordinal = attempts_[fp]++;
    }
    // pure function of (seed, fingerprint, ordinal): reruns see the same faults
    std::uint64_t h = seed_;
    for (char c : fp) h = mix64(h, static_cast<unsigned char>(c));
    h = mix64(h, ordinal);
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    if (u < rate_) {
        throw UqError(ErrorKind::transport, "injected transport failure (" + fp.substr(0, 8) + ")");
    }
    return inner_->complete(req);
}

// ----- gateway -----

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(options), jitter_rng_(options.retry.jitter_seed) {
    if (options_.max_in_flight < 1) {
        throw UqError(ErrorKind::validation, "max_in_flight must be >= 1");
    }
    if (options_.retry.max_attempts < 1) {
        throw UqError(ErrorKind::validation, "retry max_attempts must be >= 1");
    }
}

void Gateway::acquire_slot() {
    std::unique_lock<std::mutex> lock(slots_mu_);
    slots_cv_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
    ++in_flight_;
}

void Gateway::release_slot() {
    {
        std::lock_guard<std::mutex> lock(slots_mu_);
        --in_flight_;
    }
    slots_cv_.notify_one();
}

void Gateway::rate_limit_wait() {
    if (options_.requests_per_second <= 0.0) return;
    const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / options_.requests_per_second));
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard<std::mutex> lock(rate_mu_);
        const auto now = std::chrono::steady_clock::now();
        if (next_slot_ < now) next_slot_ = now;
        slot = next_slot_;
        next_slot_ += interval;
    }
    std::this_thread::sleep_until(slot);
}

CompletionResponse Gateway::complete(const CompletionRequest& req) {
    validate_request(req);
    acquire_slot();
    struct SlotGuard {
        Gateway* g;
        ~SlotGuard() { g->release_slot(); }
    } guard{this};

    const RetryPolicy& rp = options_.retry;
    double backoff = rp.initial_backoff_s;
    for (int attempt = 1;; ++attempt) {
        rate_limit_wait();
        try {
            CompletionResponse resp = backend_->complete(req);
            for (auto& d : resp.token_distributions) {
                canonicalize_distribution(d);
            }
            resp.backend_metadata["attempts"] = std::to_string(attempt);
            return resp;
        } catch (const UqError& e) {
            if (e.kind() != ErrorKind::transport || attempt >= rp.max_attempts) {
                throw;
            }
            double jitter;
            {
                std::lock_guard<std::mutex> lock(jitter_mu_);
                jitter = 1.0 + rp.jitter_frac * (2.0 * jitter_rng_.next_unit() - 1.0);
            }
            const double sleep_s = std::min(backoff, rp.max_backoff_s) * jitter;
            std::this_thread::sleep_for(std::chrono::duration<double>(sleep_s));
            backoff *= rp.backoff_multiplier;
        }
    }
}

} // namespace uqeval
