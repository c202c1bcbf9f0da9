#include "uqeval/http_backend.hpp"

#include <cstdlib>

#include "httplib.h"

#include "uqeval/errors.hpp"

namespace uqeval {

namespace {

struct ParsedEndpoint {
    std::string base;          // scheme://host[:port]
    std::string path_prefix;   // e.g. /v1
};

ParsedEndpoint parse_endpoint(const std::string& endpoint) {
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw UqError(ErrorKind::validation, "endpoint must start with http:// or https://");
    }
    const auto path_start = endpoint.find('/', scheme_end + 3);
    ParsedEndpoint out;
    if (path_start == std::string::npos) {
        out.base = endpoint;
    } else {
        out.base = endpoint.substr(0, path_start);
        out.path_prefix = endpoint.substr(path_start);
        while (!out.path_prefix.empty() && out.path_prefix.back() == '/') {
            out.path_prefix.pop_back();
        }
    }
    return out;
}

class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
        if (config_.api_key.empty()) {
            if (const char* env = std::getenv("UQEVAL_API_KEY")) {
                config_.api_key = env;
            }
        }
        parsed_ = parse_endpoint(config_.endpoint);
    }

    std::string name() const override { return "http(" + config_.endpoint + ")"; }

    CompletionResponse complete(const CompletionRequest& req) override {
        json body;
        body["model"] = req.model_id;
        json messages = json::array();
        for (const auto& m : req.prompt_messages) {
            messages.push_back(json{{"role", m.role}, {"content", m.text}});
        }
        body["messages"] = std::move(messages);
        body["temperature"] = req.temperature;
        body["max_tokens"] = req.max_new_tokens;
        if (req.want_token_distributions) {
            body["logprobs"] = true;
            // the wire protocol has no "full vocabulary" request; ask for the
            // top-k and record truncated coverage
            body["top_logprobs"] = req.top_k_logprobs > 0 ? req.top_k_logprobs : 20;
        }

        httplib::Client client(parsed_.base);
        client.set_connection_timeout(std::chrono::duration<double>(config_.timeout_s));
        client.set_read_timeout(std::chrono::duration<double>(config_.timeout_s));
        httplib::Headers headers;
        if (!config_.api_key.empty()) {
            headers.emplace("Authorization", "Bearer " + config_.api_key);
        }

        const std::string path = parsed_.path_prefix + "/chat/completions";
        auto res = client.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            throw UqError(ErrorKind::transport,
                          "request to " + parsed_.base + path + " failed: " +
                              httplib::to_string(res.error()));
        }
        if (res->status == 429 || res->status >= 500) {
            throw UqError(ErrorKind::transport,
                          "HTTP " + std::to_string(res->status) + " from " + parsed_.base);
        }
        if (res->status >= 400) {
            throw UqError(ErrorKind::request,
                          "HTTP " + std::to_string(res->status) + ": " + res->body);
        }
        return parse_completion(req, res->body);
    }

private:
    CompletionResponse parse_completion(const CompletionRequest& req, const std::string& body) {
        json j = json::parse(body, nullptr, false);
        if (j.is_discarded()) {
            throw UqError(ErrorKind::request, "backend returned invalid JSON");
        }
        CompletionResponse resp;
        try {
            const json& choice = j.at("choices").at(0);
            resp.text = choice.at("message").at("content").get<std::string>();
            if (req.want_token_distributions) {
                if (!choice.contains("logprobs") || choice.at("logprobs").is_null()) {
                    throw UqError(ErrorKind::capability,
                                  "backend returned no logprobs but token distributions were requested");
                }
                int position = 0;
                for (const auto& tok : choice.at("logprobs").at("content")) {
                    TokenDistribution dist;
                    dist.position = position++;
                    dist.coverage_is_full_vocab = false;
                    if (tok.contains("top_logprobs") && tok.at("top_logprobs").is_array() &&
                        !tok.at("top_logprobs").empty()) {
                        for (const auto& e : tok.at("top_logprobs")) {
                            dist.entries.push_back({e.at("token").get<std::string>(),
                                                    e.at("logprob").get<double>()});
                        }
                    } else {
                        // degrade to the sampled token's own logprob
                        dist.entries.push_back({tok.at("token").get<std::string>(),
                                                tok.at("logprob").get<double>()});
                    }
                    resp.token_distributions.push_back(std::move(dist));
                }
            }
            if (j.contains("model") && j.at("model").is_string()) {
                resp.backend_metadata["served_model"] = j.at("model").get<std::string>();
            }
        } catch (const json::exception& e) {
            throw UqError(ErrorKind::request,
                          std::string("unexpected completion shape: ") + e.what());
        }
        return resp;
    }

    HttpBackendConfig config_;
    ParsedEndpoint parsed_;
};

} // namespace

std::shared_ptr<Backend> make_http_backend(HttpBackendConfig config) {
    return std::make_shared<HttpBackend>(std::move(config));
}

std::shared_ptr<Backend> make_backend_for_endpoint(const std::string& endpoint) {
    if (endpoint.rfind("mock:", 0) == 0) {
        return std::make_shared<ScriptedMockBackend>(MockScript::load(endpoint.substr(5)));
    }
    return make_http_backend(HttpBackendConfig{endpoint, "", 120.0});
}

} // namespace uqeval
