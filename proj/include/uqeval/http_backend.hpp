#pragma once

#include <memory>
#include <string>

#include "uqeval/gateway.hpp"

namespace uqeval {

struct HttpBackendConfig {
    std::string endpoint;      // http(s)://host[:port][/path-prefix], e.g. http://localhost:8000/v1
    std::string api_key;       // taken from $UQEVAL_API_KEY when empty
    double timeout_s = 120.0;
};

// OpenAI-compatible chat-completions client: POST <endpoint>/chat/completions,
// logprobs via choices[0].logprobs.content[*].top_logprobs.
std::shared_ptr<Backend> make_http_backend(HttpBackendConfig config);

// Dispatch on the endpoint string: "mock:<script.json>" loads a scripted mock,
// anything else is treated as an HTTP base URL.
std::shared_ptr<Backend> make_backend_for_endpoint(const std::string& endpoint);

} // namespace uqeval
