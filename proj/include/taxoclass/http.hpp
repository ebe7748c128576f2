#pragma once

// OpenAI-compatible chat-completion and embedding clients. Define
// CPPHTTPLIB_OPENSSL_SUPPORT before including to allow https endpoints.

#include <chrono>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "httplib.h"

#include "taxoclass/embedding.hpp"
#include "taxoclass/errors.hpp"
#include "taxoclass/gateway.hpp"
#include "taxoclass/json_lines.hpp"

namespace taxoclass {

struct Endpoint {
    std::string origin; // scheme://host[:port]
    std::string base_path;
};

/// Splits "https://api.example.com/v1" into origin and base path.
inline Endpoint parse_endpoint(std::string_view url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string_view::npos) throw ConfigError("endpoint '" + std::string(url) + "' has no scheme");
    auto scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https")
        throw ConfigError("endpoint scheme must be http or https: " + std::string(url));
    auto path_start = url.find('/', scheme_end + 3);
    Endpoint e;
    e.origin = std::string(url.substr(0, path_start));
    if (e.origin.size() == scheme_end + 3) throw ConfigError("endpoint '" + std::string(url) + "' has no host");
    if (path_start != std::string_view::npos) e.base_path = std::string(url.substr(path_start));
    while (!e.base_path.empty() && e.base_path.back() == '/') e.base_path.pop_back();
    return e;
}

namespace http_detail {

inline json post_json(const Endpoint& ep, const std::string& path, const json& body, const std::string& token,
                      std::chrono::milliseconds timeout) {
    httplib::Client client(ep.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    if (!token.empty()) client.set_bearer_token_auth(token);

    auto started = std::chrono::steady_clock::now();
    auto res = client.Post(ep.base_path + path, body.dump(), "application/json");
    if (!res) {
        auto err = res.error();
        auto elapsed = std::chrono::steady_clock::now() - started;
        if (err == httplib::Error::ConnectionTimeout || (err == httplib::Error::Read && elapsed >= timeout * 9 / 10))
            throw TimeoutError("request to " + ep.origin + " timed out");
        throw TransportError("request to " + ep.origin + " failed: " + httplib::to_string(err));
    }
    if (res->status == 401 || res->status == 403)
        throw AuthError("provider rejected credentials (HTTP " + std::to_string(res->status) + ")");
    if (res->status == 408 || res->status == 504)
        throw TimeoutError("provider timed out (HTTP " + std::to_string(res->status) + ")");
    if (res->status < 200 || res->status >= 300)
        throw TransportError("provider returned HTTP " + std::to_string(res->status));
    try {
        return json::parse(res->body);
    } catch (const json::parse_error&) {
        throw TransportError("provider returned a non-JSON body");
    }
}

} // namespace http_detail

/// Chat-completions backend: system message from the template, user message
/// from the rendered payload.
class HttpChatProvider final : public Provider {
public:
    explicit HttpChatProvider(const ProviderConfig& config) : endpoint_(parse_endpoint(config.endpoint)) {}

    std::string complete(const PromptSpec& spec, const ProviderConfig& config) const override {
        json body;
        body["model"] = config.model_name;
        body["temperature"] = config.temperature;
        body["messages"] = json::array({
            json{{"role", "system"}, {"content", spec.system_text}},
            json{{"role", "user"}, {"content", spec.user_text()}},
        });
        auto reply = http_detail::post_json(endpoint_, "/chat/completions", body, config.credential(), config.timeout);
        try {
            return reply.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception&) {
            throw TransportError("chat reply lacks choices[0].message.content");
        }
    }

private:
    Endpoint endpoint_;
};

inline std::shared_ptr<const Provider> make_provider(const ProviderConfig& config, double mock_threshold) {
    if (config.endpoint.rfind("mock:", 0) == 0) return std::make_shared<MockProvider>(mock_threshold);
    return std::make_shared<HttpChatProvider>(config);
}

struct EmbedderConfig {
    std::string endpoint;
    std::string model_name = "sentence-transformers/all-mpnet-base-v2";
    std::string credentials_env = "TAXOCLASS_API_KEY";
    std::chrono::milliseconds timeout{60000};
    std::size_t dimension = 0; // 0 accepts whatever the service returns
};

/// Embedding service speaking the /embeddings protocol.
class HttpEmbedder final : public Embedder {
public:
    explicit HttpEmbedder(EmbedderConfig config) : config_(std::move(config)), endpoint_(parse_endpoint(config_.endpoint)) {}

    std::string model_tag() const override { return config_.model_name; }
    std::size_t dimension() const override { return config_.dimension; }

    std::vector<EmbeddingVector> embed(std::span<const std::string> texts) const override {
        if (texts.empty()) return {};
        json body;
        body["model"] = config_.model_name;
        body["input"] = std::vector<std::string>(texts.begin(), texts.end());
        const char* token = config_.credentials_env.empty() ? nullptr : std::getenv(config_.credentials_env.c_str());
        auto reply = http_detail::post_json(endpoint_, "/embeddings", body, token ? token : "", config_.timeout);
        std::vector<EmbeddingVector> out(texts.size());
        try {
            const auto& data = reply.at("data");
            if (data.size() != texts.size()) throw TransportError("embedding reply has the wrong number of vectors");
            for (std::size_t i = 0; i < data.size(); ++i) {
                auto idx = data[i].contains("index") ? data[i]["index"].get<std::size_t>() : i;
                if (idx >= out.size()) throw TransportError("embedding reply index out of range");
                out[idx].values = data[i].at("embedding").get<std::vector<double>>();
                out[idx].model_tag = config_.model_name;
                if (config_.dimension && out[idx].values.size() != config_.dimension)
                    throw DomainError("embedding dimension " + std::to_string(out[idx].values.size()) +
                                      " differs from configured " + std::to_string(config_.dimension));
            }
        } catch (const json::exception&) {
            throw TransportError("embedding reply lacks data[].embedding");
        }
        return out;
    }

private:
    EmbedderConfig config_;
    Endpoint endpoint_;
};

} // namespace taxoclass
