#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "noteqa/errors.hpp"
#include "noteqa/genclient.hpp"

// HTTP clients: OpenAI-style chat completions, the reranker scoring endpoint
// and the external metric scorer. Plain HTTP; point these at a local
// inference server or a TLS-terminating proxy.

namespace noteqa::http {

using json = nlohmann::ordered_json;

namespace detail {

// Splits "http://host:port/some/path" into client base and path.
inline std::pair<std::string, std::string> split_endpoint(const std::string& endpoint,
                                                          const std::string& default_path) {
    size_t scheme = endpoint.find("://");
    size_t path_start = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos || path_start + 1 >= endpoint.size())
        return {endpoint.substr(0, path_start), default_path};
    return {endpoint.substr(0, path_start), endpoint.substr(path_start)};
}

inline bool retryable_status(int status) {
    return status == 429 || status >= 500;
}

inline std::string excerpt(const std::string& body, size_t limit = 200) {
    if (body.size() <= limit) return body;
    return body.substr(0, limit) + "...";
}

// POSTs JSON with bounded retries and exponential backoff. Only transport
// failures and retryable statuses are retried; a request that returned
// success is never reissued.
inline json post_json(const std::string& endpoint, const std::string& default_path,
                      const json& payload, const httplib::Headers& headers, int retries,
                      int backoff_ms, int timeout_s, const std::string& what) {
    auto [base, path] = split_endpoint(endpoint, default_path);
    std::string body = payload.dump();
    std::string last_failure = "no attempt made";
    for (int attempt = 0; attempt <= retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(backoff_ms << (attempt - 1)));
        }
        httplib::Client client(base);
        client.set_connection_timeout(timeout_s);
        client.set_read_timeout(timeout_s);
        httplib::Result res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_failure = "connection error (" + httplib::to_string(res.error()) + ")";
            continue;
        }
        if (res->status == 200) {
            try {
                return json::parse(res->body);
            } catch (const json::parse_error& e) {
                throw BackendError(what + ": bad JSON in response: " + e.what());
            }
        }
        if (!retryable_status(res->status))
            throw BackendError(what + ": HTTP " + std::to_string(res->status) + ": " +
                               excerpt(res->body));
        last_failure = "HTTP " + std::to_string(res->status);
    }
    throw BackendError(what + ": retry budget exhausted after " + std::to_string(retries + 1) +
                       " attempts; last failure: " + last_failure);
}

}  // namespace detail

class ChatBackend : public genclient::Backend {
  public:
    explicit ChatBackend(genclient::HttpConfig config) : config_(std::move(config)) {}

    std::string id() const override { return "http:" + config_.model; }

  protected:
    genclient::GenerationResult do_generate(const genclient::GenerationRequest& req) override {
        json messages = json::array();
        for (const genclient::Message& m : req.messages)
            messages.push_back({{"role", m.role}, {"content", m.content}});
        json payload{{"model", config_.model},
                     {"messages", std::move(messages)},
                     {"temperature", req.temperature},
                     {"max_tokens", req.max_tokens}};
        if (req.seed) payload["seed"] = *req.seed;

        httplib::Headers headers;
        if (!config_.api_key_value.empty())
            headers.emplace(config_.api_key_header, config_.api_key_value);

        auto start = std::chrono::steady_clock::now();
        json response = detail::post_json(config_.endpoint, config_.path, payload, headers,
                                          config_.retries, config_.backoff_ms,
                                          config_.timeout_s, "chat backend");
        auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - start)
                           .count();
        try {
            std::string text =
                response.at("choices").at(0).at("message").at("content").get<std::string>();
            return {std::move(text), id(), static_cast<long>(elapsed)};
        } catch (const json::exception& e) {
            throw BackendError(std::string("chat backend: unexpected response shape: ") +
                               e.what());
        }
    }

  private:
    genclient::HttpConfig config_;
};

// Remote reranker: POST {"query", "documents"} -> {"scores"}, one real per
// document, higher means more relevant.
class RerankClient {
  public:
    explicit RerankClient(std::string endpoint, int retries = 2, int backoff_ms = 100)
        : endpoint_(std::move(endpoint)), retries_(retries), backoff_ms_(backoff_ms) {}

    std::vector<double> score(const std::string& query,
                              const std::vector<std::string>& documents) const {
        json payload{{"query", query}, {"documents", documents}};
        json response = detail::post_json(endpoint_, "/rerank", payload, {}, retries_,
                                          backoff_ms_, 120, "reranker");
        std::vector<double> scores;
        try {
            for (const json& s : response.at("scores")) scores.push_back(s.get<double>());
        } catch (const json::exception& e) {
            throw BackendError(std::string("reranker: unexpected response shape: ") + e.what());
        }
        return scores;
    }

  private:
    std::string endpoint_;
    int retries_;
    int backoff_ms_;
};

// External metric scorer: POST {"metric", "pairs": [{"hypothesis","reference"}]}
// -> {"scores": [...]}. Used to plug model-based relevance metrics into the
// evaluation report.
class ScorerClient {
  public:
    explicit ScorerClient(std::string endpoint, int retries = 2, int backoff_ms = 100)
        : endpoint_(std::move(endpoint)), retries_(retries), backoff_ms_(backoff_ms) {}

    std::vector<double> score(const std::string& metric,
                              const std::vector<std::pair<std::string, std::string>>& pairs) const {
        json jpairs = json::array();
        for (const auto& [hyp, ref] : pairs)
            jpairs.push_back({{"hypothesis", hyp}, {"reference", ref}});
        json payload{{"metric", metric}, {"pairs", std::move(jpairs)}};
        json response = detail::post_json(endpoint_, "/score", payload, {}, retries_,
                                          backoff_ms_, 120, "scorer");
        std::vector<double> scores;
        try {
            for (const json& s : response.at("scores")) scores.push_back(s.get<double>());
        } catch (const json::exception& e) {
            throw BackendError(std::string("scorer: unexpected response shape: ") + e.what());
        }
        return scores;
    }

  private:
    std::string endpoint_;
    int retries_;
    int backoff_ms_;
};

}  // namespace noteqa::http
