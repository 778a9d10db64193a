#pragma once

// Generic JSON chat-completion HTTP backend and the HTTP score adapter.
// Request shape:  POST {endpoint path}
//   {"model": ..., "messages": [{"role": "user", "content": prompt}],
//    "temperature": ..., "max_tokens": ..., "seed"?: ...}
// Response shape: {"choices": [{"message": {"content": ...}}]}
// The credential is read from a configurable environment variable and sent as
// a bearer token.

#include <cstdlib>
#include <string>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "synthsiam/baseline.hpp"
#include "synthsiam/errors.hpp"
#include "synthsiam/generation.hpp"

namespace synthsiam {

struct HttpBackendConfig {
    std::string endpoint; // e.g. http://localhost:8080/v1/chat/completions
    std::string model = "gpt-3";
    std::string credential_env = "SYNTHSIAM_API_KEY";
    int timeout_seconds = 60;
};

namespace detail {

// Splits a URL into (scheme://host[:port], path).
inline std::pair<std::string, std::string> split_url(const std::string& url) {
    const std::size_t scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw InvalidArgument("endpoint '" + url + "' lacks a scheme");
    }
    const std::size_t path_start = url.find('/', scheme + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

} // namespace detail

class HttpChatClient final : public GenerationClient {
public:
    explicit HttpChatClient(HttpBackendConfig config) : config_(std::move(config)) {
        if (config_.endpoint.empty()) {
            throw InvalidArgument("HTTP backend requires an endpoint");
        }
        std::tie(base_, path_) = detail::split_url(config_.endpoint);
    }

    std::string complete(const std::string& prompt, const GenerationParams& params) override {
        params.validate();
        json request{{"model", config_.model},
                     {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
                     {"temperature", params.temperature},
                     {"max_tokens", params.max_tokens}};
        if (params.seed.has_value()) request["seed"] = *params.seed;

        httplib::Client client(base_);
        client.set_read_timeout(config_.timeout_seconds, 0);
        client.set_connection_timeout(config_.timeout_seconds, 0);
        httplib::Headers headers;
        if (!config_.credential_env.empty()) {
            if (const char* key = std::getenv(config_.credential_env.c_str())) {
                headers.emplace("Authorization", std::string("Bearer ") + key);
            }
        }
        const auto res = client.Post(path_, headers, request.dump(), "application/json");
        if (!res) {
            throw GenerationError("HTTP request to " + config_.endpoint + " failed: " +
                                  httplib::to_string(res.error()));
        }
        if (res->status != 200) {
            throw GenerationError("HTTP backend returned status " +
                                  std::to_string(res->status) + ": " + res->body);
        }
        json response;
        try {
            response = json::parse(res->body);
        } catch (const json::exception& e) {
            throw GenerationError(std::string("HTTP backend returned invalid JSON: ") +
                                  e.what());
        }
        if (!response.contains("choices") || !response["choices"].is_array() ||
            response["choices"].empty()) {
            throw GenerationError("HTTP backend response has no choices");
        }
        const auto& first = response["choices"][0];
        if (!first.contains("message") || !first["message"].contains("content")) {
            throw GenerationError("HTTP backend response has no message content");
        }
        return first["message"]["content"].get<std::string>();
    }

    const std::string& model_id() const override { return config_.model; }

private:
    HttpBackendConfig config_;
    std::string base_;
    std::string path_;
};

// Scores texts through a service endpoint: POST {"text": ...} -> {"score": x}.
class HttpScoreAdapter final : public DetectorAdapter {
public:
    explicit HttpScoreAdapter(std::string endpoint, int timeout_seconds = 30)
        : endpoint_(std::move(endpoint)), timeout_seconds_(timeout_seconds) {
        if (endpoint_.empty()) {
            throw InvalidArgument("HTTP adapter requires an endpoint");
        }
        std::tie(base_, path_) = detail::split_url(endpoint_);
    }

    double score(const std::string& text) override {
        httplib::Client client(base_);
        client.set_read_timeout(timeout_seconds_, 0);
        const auto res =
            client.Post(path_, json{{"text", text}}.dump(), "application/json");
        if (!res || res->status != 200) {
            throw Error("HTTP adapter request to " + endpoint_ + " failed");
        }
        return ExecAdapter::parse_score(res->body, endpoint_);
    }

    std::string name() const override { return "http:" + endpoint_; }

private:
    std::string endpoint_;
    int timeout_seconds_;
    std::string base_;
    std::string path_;
};

} // namespace synthsiam
