#include <doctest.h>

#include <atomic>
#include <thread>

#include <json.hpp>

#include "tid/services.hpp"

using namespace tid::services;
using json = nlohmann::json;

namespace {

// Canned transport that records concurrency and can fail the first N calls.
class FakeTransport : public HttpTransport {
public:
    std::vector<std::pair<int, std::string>> script;  // (status, body) per call
    std::atomic<int> calls{0};
    std::atomic<int> in_flight{0};
    std::atomic<int> max_observed{0};
    int delay_ms = 0;

    HttpResponse post(const std::string&, const std::string&, const std::string&) override {
        int current = ++in_flight;
        int prev = max_observed.load();
        while (current > prev && !max_observed.compare_exchange_weak(prev, current)) {}
        if (delay_ms) std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
        int index = calls++;
        --in_flight;
        if (index < static_cast<int>(script.size()))
            return {script[index].first, script[index].second};
        return {500, "unscripted call"};
    }
};

std::string embeddings_body(const std::vector<std::vector<double>>& vectors) {
    json data = json::array();
    for (size_t i = 0; i < vectors.size(); ++i)
        data.push_back({{"index", i}, {"embedding", vectors[i]}});
    return json{{"data", data}}.dump();
}

std::string chat_body(const std::vector<std::string>& contents) {
    json choices = json::array();
    for (const auto& c : contents)
        choices.push_back({{"message", {{"role", "assistant"}, {"content", c}}}});
    return json{{"choices", choices}}.dump();
}

ServiceConfig fast_config() {
    ServiceConfig config;
    config.max_retries = 2;
    return config;
}

}  // namespace

TEST_CASE("embed_batch preserves order and arity") {
    auto transport = std::make_unique<FakeTransport>();
    transport->script = {{200, embeddings_body({{1, 0}, {0, 1}})}};
    HttpEmbedder embedder(fast_config(), std::move(transport));
    auto out = embedder.embed_batch({"a", "b"});
    REQUIRE(out.size() == 2);
    CHECK(out[0].values == std::vector<double>{1, 0});
    CHECK(out[1].values == std::vector<double>{0, 1});
}

TEST_CASE("embed_batch rejects mismatched dimensions") {
    auto transport = std::make_unique<FakeTransport>();
    transport->script = {{200, embeddings_body({{1, 0, 0, 0, 0, 0, 0, 0},
                                                {1, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0}})}};
    HttpEmbedder embedder(fast_config(), std::move(transport));
    CHECK_THROWS_AS(embedder.embed_batch({"a", "b"}), ServiceError);
}

TEST_CASE("embed_batch rejects empty inputs") {
    HttpEmbedder embedder(fast_config(), std::make_unique<FakeTransport>());
    CHECK_THROWS_AS(embedder.embed_batch({}), std::invalid_argument);
    CHECK_THROWS_AS(embedder.embed_batch({"a", ""}), std::invalid_argument);
}

TEST_CASE("generate returns num_return_sequences strings in rank order") {
    auto transport = std::make_unique<FakeTransport>();
    transport->script = {{200, chat_body({"first", "second", "third"})}};
    HttpGenerationClient client(fast_config(), std::move(transport));
    GenerationRequest request;
    request.num_return_sequences = 3;
    auto out = client.generate(request);
    CHECK(out == std::vector<std::string>{"first", "second", "third"});
}

TEST_CASE("generate retries transient failures then succeeds") {
    auto transport = std::make_unique<FakeTransport>();
    transport->script = {{0, "timeout"}, {503, "busy"}, {200, chat_body({"ok"})}};
    auto* raw = transport.get();
    HttpGenerationClient client(fast_config(), std::move(transport));
    auto out = client.generate(GenerationRequest{});
    CHECK(out == std::vector<std::string>{"ok"});
    CHECK(raw->calls == 3);
}

TEST_CASE("generate does not retry auth failures") {
    auto transport = std::make_unique<FakeTransport>();
    transport->script = {{401, "no key"}, {200, chat_body({"never reached"})}};
    auto* raw = transport.get();
    HttpGenerationClient client(fast_config(), std::move(transport));
    CHECK_THROWS_AS(client.generate(GenerationRequest{}), ServiceError);
    CHECK(raw->calls == 1);
}

TEST_CASE("generate gives up after max_retries") {
    auto transport = std::make_unique<FakeTransport>();
    transport->script = {{500, "a"}, {500, "b"}, {500, "c"}, {500, "d"}};
    ServiceConfig config = fast_config();  // max_retries = 2 -> 3 attempts
    auto* raw = transport.get();
    HttpGenerationClient client(config, std::move(transport));
    CHECK_THROWS_AS(client.generate(GenerationRequest{}), ServiceError);
    CHECK(raw->calls == 3);
}

TEST_CASE("in-flight requests never exceed max_in_flight") {
    auto transport = std::make_unique<FakeTransport>();
    transport->delay_ms = 20;
    for (int i = 0; i < 16; ++i) transport->script.push_back({200, chat_body({"ok"})});
    ServiceConfig config = fast_config();
    config.max_in_flight = 3;
    auto* raw = transport.get();
    HttpGenerationClient client(config, std::move(transport));

    std::vector<std::thread> workers;
    for (int t = 0; t < 8; ++t)
        workers.emplace_back([&client, t] {
            GenerationRequest request;
            request.user_text = "thread " + std::to_string(t);
            client.generate(request);
            client.generate(request);
        });
    for (auto& w : workers) w.join();
    CHECK(raw->max_observed <= 3);
    CHECK(raw->calls == 16);
}

TEST_CASE("mock generator is deterministic") {
    MockGenerator mock({"alpha", "beta", "gamma"});
    GenerationRequest request;
    request.user_text = "some prompt";
    request.num_return_sequences = 2;
    auto first = mock.generate(request);
    auto second = mock.generate(request);
    CHECK(first == second);
    CHECK(first.size() == 2);
}

TEST_CASE("mock generator repeats a single-entry table") {
    MockGenerator mock({"only"});
    GenerationRequest request;
    request.num_return_sequences = 4;
    auto out = mock.generate(request);
    CHECK(out == std::vector<std::string>{"only", "only", "only", "only"});
}

TEST_CASE("mock generator cycles a short table deterministically") {
    MockGenerator mock({"one", "two"});
    GenerationRequest request;
    request.user_text = "x";
    request.num_return_sequences = 3;
    auto out = mock.generate(request);
    CHECK(out.size() == 3);
    CHECK(out[0] == out[2]);        // wraps around the 2-entry table
    CHECK(out[0] != out[1]);
}

TEST_CASE("backoff delays grow and are capped") {
    double d0 = backoff_delay_s(0, 1);
    double d4 = backoff_delay_s(4, 1);
    double d10 = backoff_delay_s(10, 1);
    CHECK(d0 >= 0.5);
    CHECK(d0 <= 1.0);
    CHECK(d4 > d0);
    CHECK(d10 <= 30.0);
}

TEST_CASE("retryable statuses are transport errors, 5xx and 429") {
    CHECK(is_retryable_status(0));
    CHECK(is_retryable_status(429));
    CHECK(is_retryable_status(500));
    CHECK(is_retryable_status(503));
    CHECK_FALSE(is_retryable_status(400));
    CHECK_FALSE(is_retryable_status(401));
    CHECK_FALSE(is_retryable_status(404));
}

TEST_CASE("hashing embedder produces uniform-dim unit vectors deterministically") {
    HashingEmbedder embedder(32);
    auto out = embedder.embed_batch({"hello world", "hello world", "different"});
    CHECK(out[0].dim() == 32);
    CHECK(out[0].values == out[1].values);
    CHECK(out[0].values != out[2].values);
    double norm = 0;
    for (double x : out[0].values) norm += x * x;
    CHECK(norm == doctest::Approx(1.0));
}
