#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

namespace tid::services {

struct EmbeddingVector {
    std::vector<double> values;
    size_t dim() const { return values.size(); }
};

struct GenerationRequest {
    std::string system_text;
    std::string user_text;
    int max_new_tokens = 30;
    int num_return_sequences = 1;
    double temperature = 0.0;
};

struct ServiceConfig {
    std::string base_url = "http://localhost:8000";
    std::string api_key_env_name = "TID_API_KEY";
    std::string embed_model = "text-embedding";
    std::string chat_model = "chat";
    double request_timeout_s = 60.0;
    int max_retries = 3;
    int max_in_flight = 4;
};

class ServiceError : public std::runtime_error {
public:
    explicit ServiceError(const std::string& what) : std::runtime_error(what) {}
};

struct HttpResponse {
    int status = 0;
    std::string body;
};

// Minimal transport seam so tests can inject canned responses and count
// concurrent requests.
class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post(const std::string& path, const std::string& body,
                              const std::string& api_key) = 0;
};

std::unique_ptr<HttpTransport> make_httplib_transport(const ServiceConfig& config);

// Bounds the number of outstanding requests at max_in_flight.
class InFlightGate {
public:
    explicit InFlightGate(int limit) : limit_(limit) {}
    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return active_ < limit_; });
        ++active_;
    }
    void release() {
        {
            std::lock_guard lock(mu_);
            --active_;
        }
        cv_.notify_one();
    }

private:
    int limit_;
    int active_ = 0;
    std::mutex mu_;
    std::condition_variable cv_;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    // Order-preserving; all returned vectors have the same dimension.
    virtual std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) = 0;
};

class GenerationClient {
public:
    virtual ~GenerationClient() = default;
    // Returns num_return_sequences strings, best first.
    virtual std::vector<std::string> generate(const GenerationRequest& request) = 0;
};

// Embeddings endpoint client (POST /v1/embeddings shape).
class HttpEmbedder : public Embedder {
public:
    HttpEmbedder(ServiceConfig config, std::unique_ptr<HttpTransport> transport = nullptr);
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;

private:
    ServiceConfig config_;
    std::unique_ptr<HttpTransport> transport_;
    std::shared_ptr<InFlightGate> gate_;
};

// Chat-completions endpoint client (POST /v1/chat/completions shape), with
// exponential backoff on transport errors, 5xx and 429.
class HttpGenerationClient : public GenerationClient {
public:
    HttpGenerationClient(ServiceConfig config, std::unique_ptr<HttpTransport> transport = nullptr);
    std::vector<std::string> generate(const GenerationRequest& request) override;

private:
    ServiceConfig config_;
    std::unique_ptr<HttpTransport> transport_;
    std::shared_ptr<InFlightGate> gate_;
};

// Deterministic offline generator: hashes the user prompt to pick a starting
// row in the seeded response table, then cycles entries to fill the beam.
class MockGenerator : public GenerationClient {
public:
    explicit MockGenerator(std::vector<std::string> responses);
    std::vector<std::string> generate(const GenerationRequest& request) override;

private:
    std::vector<std::string> responses_;
};

// Deterministic local embedder: character trigram feature hashing, L2
// normalized. Keeps the whole pipeline runnable without a hosted model.
class HashingEmbedder : public Embedder {
public:
    explicit HashingEmbedder(size_t dim = 64) : dim_(dim) {}
    std::vector<EmbeddingVector> embed_batch(const std::vector<std::string>& texts) override;
    EmbeddingVector embed(const std::string& text) const;

private:
    size_t dim_;
};

// Backoff schedule shared by the HTTP clients: 1s initial, doubling, jittered,
// capped at 30s. Exposed for tests.
double backoff_delay_s(int attempt, std::uint64_t jitter_seed);

bool is_retryable_status(int status);

std::uint64_t fnv1a_hash(const std::string& text);

}  // namespace tid::services
