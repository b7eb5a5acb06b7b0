#include "tid/services.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <json.hpp>

#define CPPHTTPLIB_NO_EXCEPTIONS
#include <httplib.h>

namespace tid::services {

using json = nlohmann::json;

std::uint64_t fnv1a_hash(const std::string& text) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

bool is_retryable_status(int status) {
    return status == 0 || status == 429 || (status >= 500 && status < 600);
}

double backoff_delay_s(int attempt, std::uint64_t jitter_seed) {
    double base = std::min(30.0, std::ldexp(1.0, attempt));  // 1, 2, 4, ... capped
    // Jitter in [0.5, 1.0) of the base delay.
    double frac = 0.5 + 0.5 * double(jitter_seed % 1000) / 1000.0;
    return base * frac;
}

namespace {

class HttplibTransport : public HttpTransport {
public:
    explicit HttplibTransport(const ServiceConfig& config) : config_(config) {}

    HttpResponse post(const std::string& path, const std::string& body,
                      const std::string& api_key) override {
        httplib::Client client(config_.base_url);
        client.set_connection_timeout(std::chrono::milliseconds(
            static_cast<int>(config_.request_timeout_s * 1000)));
        client.set_read_timeout(std::chrono::milliseconds(
            static_cast<int>(config_.request_timeout_s * 1000)));
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) return {0, "transport error: " + httplib::to_string(res.error())};
        return {res->status, res->body};
    }

private:
    ServiceConfig config_;
};

std::string read_api_key(const ServiceConfig& config) {
    const char* key = std::getenv(config.api_key_env_name.c_str());
    return key ? key : "";
}

// Shared retry loop; 4xx other than 429 is fatal immediately.
HttpResponse post_with_retries(HttpTransport& transport, const ServiceConfig& config,
                               InFlightGate& gate, const std::string& path,
                               const std::string& body) {
    std::string api_key = read_api_key(config);
    HttpResponse response;
    for (int attempt = 0; attempt <= config.max_retries; ++attempt) {
        if (attempt > 0) {
            double delay = backoff_delay_s(attempt - 1, fnv1a_hash(body) + attempt);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        gate.acquire();
        response = transport.post(path, body, api_key);
        gate.release();
        if (response.status >= 200 && response.status < 300) return response;
        if (!is_retryable_status(response.status))
            throw ServiceError("request to " + path + " failed with status " +
                               std::to_string(response.status) + ": " + response.body);
    }
    throw ServiceError("request to " + path + " failed after " +
                       std::to_string(config.max_retries) + " retries (last status " +
                       std::to_string(response.status) + ")");
}

}  // namespace

std::unique_ptr<HttpTransport> make_httplib_transport(const ServiceConfig& config) {
    return std::make_unique<HttplibTransport>(config);
}

HttpEmbedder::HttpEmbedder(ServiceConfig config, std::unique_ptr<HttpTransport> transport)
    : config_(std::move(config)),
      transport_(transport ? std::move(transport) : make_httplib_transport(config_)),
      gate_(std::make_shared<InFlightGate>(config_.max_in_flight)) {}

std::vector<EmbeddingVector> HttpEmbedder::embed_batch(const std::vector<std::string>& texts) {
    if (texts.empty()) throw std::invalid_argument("embed_batch: empty input");
    for (const auto& t : texts)
        if (t.empty()) throw std::invalid_argument("embed_batch: empty string in input");

    json body{{"model", config_.embed_model}, {"input", texts}};
    auto response = post_with_retries(*transport_, config_, *gate_, "/v1/embeddings", body.dump());

    json j = json::parse(response.body, nullptr, false);
    if (j.is_discarded() || !j.contains("data") || !j["data"].is_array() ||
        j["data"].size() != texts.size())
        throw ServiceError("embeddings response malformed or wrong arity");

    std::vector<EmbeddingVector> out(texts.size());
    for (const auto& entry : j["data"]) {
        size_t index = entry.at("index").get<size_t>();
        if (index >= out.size()) throw ServiceError("embeddings response index out of range");
        out[index].values = entry.at("embedding").get<std::vector<double>>();
    }
    size_t dim = out.front().dim();
    for (const auto& v : out) {
        if (v.dim() != dim)
            throw ServiceError("embedding dimension mismatch across responses");
        for (double x : v.values)
            if (!std::isfinite(x)) throw ServiceError("non-finite embedding value");
    }
    return out;
}

HttpGenerationClient::HttpGenerationClient(ServiceConfig config,
                                           std::unique_ptr<HttpTransport> transport)
    : config_(std::move(config)),
      transport_(transport ? std::move(transport) : make_httplib_transport(config_)),
      gate_(std::make_shared<InFlightGate>(config_.max_in_flight)) {}

std::vector<std::string> HttpGenerationClient::generate(const GenerationRequest& request) {
    if (request.max_new_tokens < 1 || request.num_return_sequences < 1)
        throw std::invalid_argument("invalid generation request");

    json body{{"model", config_.chat_model},
              {"messages",
               {{{"role", "system"}, {"content", request.system_text}},
                {{"role", "user"}, {"content", request.user_text}}}},
              {"max_tokens", request.max_new_tokens},
              {"n", request.num_return_sequences},
              {"temperature", request.temperature}};

    auto response =
        post_with_retries(*transport_, config_, *gate_, "/v1/chat/completions", body.dump());

    json j = json::parse(response.body, nullptr, false);
    if (j.is_discarded() || !j.contains("choices") || !j["choices"].is_array())
        throw ServiceError("chat response malformed");

    std::vector<std::string> out;
    for (const auto& choice : j["choices"])
        out.push_back(choice.at("message").at("content").get<std::string>());
    if (static_cast<int>(out.size()) != request.num_return_sequences)
        throw ServiceError("chat response returned " + std::to_string(out.size()) +
                           " choices, expected " + std::to_string(request.num_return_sequences));
    return out;
}

MockGenerator::MockGenerator(std::vector<std::string> responses)
    : responses_(std::move(responses)) {
    if (responses_.empty()) throw std::invalid_argument("mock generator needs >= 1 response");
}

std::vector<std::string> MockGenerator::generate(const GenerationRequest& request) {
    std::uint64_t start = fnv1a_hash(request.user_text) % responses_.size();
    std::vector<std::string> out;
    out.reserve(request.num_return_sequences);
    for (int i = 0; i < request.num_return_sequences; ++i)
        out.push_back(responses_[(start + i) % responses_.size()]);
    return out;
}

EmbeddingVector HashingEmbedder::embed(const std::string& text) const {
    EmbeddingVector v;
    v.values.assign(dim_, 0.0);
    // Character trigrams over the padded text.
    std::string padded = "^^" + text + "$$";
    for (size_t i = 0; i + 2 < padded.size(); ++i) {
        std::uint64_t h = fnv1a_hash(padded.substr(i, 3));
        double sign = (h >> 32) & 1 ? 1.0 : -1.0;
        v.values[h % dim_] += sign;
    }
    double norm = 0.0;
    for (double x : v.values) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) {
        v.values[0] = 1.0;  // keep vectors nonzero for cosine similarity
    } else {
        for (double& x : v.values) x /= norm;
    }
    return v;
}

std::vector<EmbeddingVector> HashingEmbedder::embed_batch(const std::vector<std::string>& texts) {
    if (texts.empty()) throw std::invalid_argument("embed_batch: empty input");
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        if (t.empty()) throw std::invalid_argument("embed_batch: empty string in input");
        out.push_back(embed(t));
    }
    return out;
}

}  // namespace tid::services
