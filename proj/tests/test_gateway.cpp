#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <chrono>
#include <thread>
#include <vector>

#include "httplib.h"

#include "uqeval/errors.hpp"
#include "uqeval/gateway.hpp"
#include "uqeval/http_backend.hpp"

using namespace uqeval;

namespace {

CompletionRequest simple_request(const std::string& text, bool want_dists = false) {
    CompletionRequest req;
    req.model_id = "m";
    req.prompt_messages = {{"system", "s"}, {"user", text}};
    req.want_token_distributions = want_dists;
    req.top_k_logprobs = 4;
    return req;
}

CompletionResponse scripted(const std::string& text) {
    CompletionResponse resp;
    resp.text = text;
    TokenDistribution d;
    d.position = 0;
    d.entries = {{text, -0.1}, {"other", -3.0}};
    resp.token_distributions.push_back(std::move(d));
    return resp;
}

GatewayOptions fast_options(int in_flight = 4) {
    GatewayOptions opts;
    opts.max_in_flight = in_flight;
    opts.retry.initial_backoff_s = 0.001;
    opts.retry.max_backoff_s = 0.002;
    return opts;
}

} // namespace

TEST_CASE("request validation enforces the invariants") {
    Gateway gw(std::make_shared<ScriptedMockBackend>([] {
                   MockScript s;
                   s.add({{"user", "x"}}, scripted("y"));
                   return s;
               }()),
               fast_options());
    CompletionRequest req = simple_request("x");
    req.max_new_tokens = 0;
    CHECK_THROWS_AS(gw.complete(req), UqError);

    req = simple_request("x");
    req.temperature = -1.0;
    CHECK_THROWS_AS(gw.complete(req), UqError);

    req = simple_request("x");
    req.prompt_messages.clear();
    CHECK_THROWS_AS(gw.complete(req), UqError);
}

TEST_CASE("mock echoes its script verbatim and deterministically") {
    const auto req = simple_request("the question", true);
    MockScript script;
    script.add(req.prompt_messages, scripted("Answer: 3"));
    Gateway gw(std::make_shared<ScriptedMockBackend>(script), fast_options());

    const auto a = gw.complete(req);
    const auto b = gw.complete(req);
    CHECK(a.text == "Answer: 3");
    REQUIRE(a.token_distributions.size() == 1);
    CHECK(a.token_distributions[0].entries.size() == 2);
    CHECK(response_to_json(a).dump() == response_to_json(b).dump());
}

TEST_CASE("mock drops distributions when not requested") {
    const auto req = simple_request("q", false);
    MockScript script;
    script.add(req.prompt_messages, scripted("Answer: 1"));
    ScriptedMockBackend mock(script);
    CHECK(mock.complete(req).token_distributions.empty());
}

TEST_CASE("mock miss policies") {
    MockScript script;
    script.add({{"user", "known"}}, scripted("ok"));
    ScriptedMockBackend strict(script);
    const auto miss = simple_request("unknown");
    try {
        strict.complete(miss);
        FAIL("expected a miss error");
    } catch (const UqError& e) {
        CHECK(std::string(e.what()).find(prompt_fingerprint(miss.prompt_messages)) !=
              std::string::npos);
    }

    script.miss_policy = MissPolicy::fallback;
    script.fallback = scripted("fallback text");
    ScriptedMockBackend lenient(script);
    CHECK(lenient.complete(miss).text == "fallback text");
}

TEST_CASE("mock sequences advance per call and stick at the end") {
    const auto req = simple_request("seq");
    MockScript script;
    script.add_sequence(req.prompt_messages,
                        {scripted("first"), scripted("second"), scripted("third")});
    ScriptedMockBackend mock(script);
    CHECK(mock.complete(req).text == "first");
    CHECK(mock.complete(req).text == "second");
    CHECK(mock.complete(req).text == "third");
    CHECK(mock.complete(req).text == "third");
}

TEST_CASE("mock script round-trips through its JSON file form") {
    const auto req = simple_request("rt");
    MockScript script;
    script.add(req.prompt_messages, scripted("value"));
    const auto dir = std::filesystem::temp_directory_path() / "uqeval_gw_script";
    std::filesystem::create_directories(dir);
    const auto path = dir / "script.json";
    script.save(path);
    const MockScript loaded = MockScript::load(path);
    CHECK(loaded.to_json().dump() == script.to_json().dump());
}

TEST_CASE("prompt fingerprints separate role and text boundaries") {
    const auto a = prompt_fingerprint({{"system", "ab"}, {"user", "c"}});
    const auto b = prompt_fingerprint({{"system", "a"}, {"user", "bc"}});
    CHECK(a != b);
    CHECK(prompt_fingerprint({{"system", "ab"}, {"user", "c"}}) == a);
}

TEST_CASE("canonicalize rejects over-unit mass and sorts entries") {
    TokenDistribution d;
    d.entries = {{"low", -5.0}, {"high", -0.1}};
    canonicalize_distribution(d);
    CHECK(d.entries.front().token_text == "high");

    TokenDistribution bad;
    bad.entries = {{"a", -0.1}, {"b", -0.1}};   // 2 * 0.905 > 1
    CHECK_THROWS_AS(canonicalize_distribution(bad), UqError);
}

TEST_CASE("failure injection is transparent under retry") {
    const int n = 40;
    MockScript script;
    std::vector<CompletionRequest> requests;
    for (int i = 0; i < n; ++i) {
        auto req = simple_request("q" + std::to_string(i), true);
        script.add(req.prompt_messages, scripted("Answer: " + std::to_string(i % 7 + 1)));
        requests.push_back(std::move(req));
    }

    Gateway reliable(std::make_shared<ScriptedMockBackend>(script), fast_options());
    Gateway flaky(std::make_shared<FailureInjectingBackend>(
                      std::make_shared<ScriptedMockBackend>(script), 0.3, 1234),
                  fast_options());

    for (const auto& req : requests) {
        auto a = reliable.complete(req);
        auto b = flaky.complete(req);
        // attempts differ; the payload must not
        a.backend_metadata.erase("attempts");
        b.backend_metadata.erase("attempts");
        CHECK(response_to_json(a).dump() == response_to_json(b).dump());
    }
}

TEST_CASE("retry budget exhausts into a transport error") {
    Gateway gw(std::make_shared<FailureInjectingBackend>(
                   std::make_shared<ScriptedMockBackend>([] {
                       MockScript s;
                       s.add({{"user", "x"}}, scripted("y"));
                       return s;
                   }()),
                   0.999999, 7),
               fast_options());
    CompletionRequest req;
    req.model_id = "m";
    req.prompt_messages = {{"user", "x"}};
    try {
        gw.complete(req);
        FAIL("expected transport exhaustion");
    } catch (const UqError& e) {
        CHECK(e.kind() == ErrorKind::transport);
    }
}

TEST_CASE("bounded concurrency: never more than N requests in flight") {
    class InstrumentedBackend : public Backend {
    public:
        CompletionResponse complete(const CompletionRequest&) override {
            const int now = ++current_;
            int seen = peak_.load();
            while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(2));
            --current_;
            CompletionResponse resp;
            resp.text = "ok";
            return resp;
        }
        std::string name() const override { return "instrumented"; }
        std::atomic<int> current_{0};
        std::atomic<int> peak_{0};
    };

    auto backend = std::make_shared<InstrumentedBackend>();
    Gateway gw(backend, fast_options(3));

    std::vector<std::thread> threads;
    for (int t = 0; t < 12; ++t) {
        threads.emplace_back([&gw, t] {
            for (int i = 0; i < 4; ++i) {
                CompletionRequest req;
                req.model_id = "m";
                req.prompt_messages = {{"user", std::to_string(t * 100 + i)}};
                gw.complete(req);
            }
        });
    }
    for (auto& t : threads) t.join();
    CHECK(backend->peak_.load() <= 3);
    CHECK(backend->peak_.load() >= 1);
}

TEST_CASE("rate limiting spaces requests out") {
    MockScript script;
    CompletionRequest req;
    req.model_id = "m";
    req.prompt_messages = {{"user", "r"}};
    script.add(req.prompt_messages, scripted("ok"));

    GatewayOptions opts = fast_options();
    opts.requests_per_second = 200.0;
    Gateway gw(std::make_shared<ScriptedMockBackend>(script), opts);

    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < 6; ++i) gw.complete(req);
    const auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0);
    CHECK(elapsed.count() >= 0.02);   // 6 requests at 5 ms spacing
}

TEST_CASE("http backend speaks the chat-completions protocol") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/v1/chat/completions", [&](const httplib::Request& hreq, httplib::Response& res) {
        ++hits;
        const json body = json::parse(hreq.body);
        CHECK(body.at("model") == "test-model");
        CHECK(body.at("messages").size() == 2);
        CHECK(body.at("logprobs") == true);
        CHECK(hreq.get_header_value("Authorization") == "Bearer sekrit");

        json token;
        token["token"] = "Answer:";
        token["logprob"] = -0.05;
        token["top_logprobs"] =
            json::array({json{{"token", "Answer:"}, {"logprob", -0.05}},
                         json{{"token", "Maybe"}, {"logprob", -4.0}}});
        json out;
        out["model"] = "test-model-v1";
        out["choices"] = json::array(
            {json{{"message", json{{"role", "assistant"}, {"content", "Answer: 2"}}},
                  {"logprobs", json{{"content", json::array({token})}}}}});
        res.set_content(out.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    setenv("UQEVAL_API_KEY", "sekrit", 1);
    auto backend =
        make_http_backend({"http://127.0.0.1:" + std::to_string(port) + "/v1", "", 10.0});
    Gateway gw(backend, fast_options());

    auto req = simple_request("question text", true);
    req.model_id = "test-model";
    const auto resp = gw.complete(req);
    CHECK(resp.text == "Answer: 2");
    REQUIRE(resp.token_distributions.size() == 1);
    CHECK(resp.token_distributions[0].entries.size() == 2);
    CHECK(resp.token_distributions[0].coverage_is_full_vocab == false);
    CHECK(resp.backend_metadata.at("served_model") == "test-model-v1");
    CHECK(hits.load() == 1);

    server.stop();
    listener.join();
}

TEST_CASE("http backend retries 429 and succeeds") {
    httplib::Server server;
    std::atomic<int> hits{0};
    server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        const int n = ++hits;
        if (n <= 2) {
            res.status = 429;
            res.set_content("slow down", "text/plain");
            return;
        }
        json out;
        out["choices"] = json::array(
            {json{{"message", json{{"role", "assistant"}, {"content", "ok after backoff"}}}}});
        res.set_content(out.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto backend = make_http_backend({"http://127.0.0.1:" + std::to_string(port), "", 10.0});
    Gateway gw(backend, fast_options());
    const auto resp = gw.complete(simple_request("retry me"));
    CHECK(resp.text == "ok after backoff");
    CHECK(resp.backend_metadata.at("attempts") == "3");
    CHECK(hits.load() == 3);

    server.stop();
    listener.join();
}

TEST_CASE("http backend surfaces 4xx as a request error with the body") {
    httplib::Server server;
    server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.status = 400;
        res.set_content("bad model name", "text/plain");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto backend = make_http_backend({"http://127.0.0.1:" + std::to_string(port), "", 10.0});
    Gateway gw(backend, fast_options());
    try {
        gw.complete(simple_request("x"));
        FAIL("expected a request error");
    } catch (const UqError& e) {
        CHECK(e.kind() == ErrorKind::request);
        CHECK(std::string(e.what()).find("bad model name") != std::string::npos);
    }

    server.stop();
    listener.join();
}

TEST_CASE("http backend reports a capability error when logprobs are missing") {
    httplib::Server server;
    server.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        json out;
        out["choices"] = json::array(
            {json{{"message", json{{"role", "assistant"}, {"content", "no logprobs here"}}}}});
        res.set_content(out.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread listener([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    auto backend = make_http_backend({"http://127.0.0.1:" + std::to_string(port), "", 10.0});
    Gateway gw(backend, fast_options());
    try {
        gw.complete(simple_request("x", true));
        FAIL("expected a capability error");
    } catch (const UqError& e) {
        CHECK(e.kind() == ErrorKind::capability);
    }

    server.stop();
    listener.join();
}

TEST_CASE("unreachable endpoints exhaust into transport errors") {
    auto backend = make_http_backend({"http://127.0.0.1:1", "", 1.0});
    GatewayOptions opts = fast_options();
    opts.retry.max_attempts = 2;
    Gateway gw(backend, opts);
    try {
        gw.complete(simple_request("x"));
        FAIL("expected transport error");
    } catch (const UqError& e) {
        CHECK(e.kind() == ErrorKind::transport);
    }
}
