#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "casework/error.hpp"
#include "casework/llm.hpp"

#include <cstdlib>

namespace casework::llm {

namespace {

struct ParsedUrl {
    std::string origin; // scheme://host[:port]
    std::string path;
};

ParsedUrl parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorKind::ConfigError, "endpoint must be an absolute URL: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
        return {url, "/"};
    }
    return {url.substr(0, path_start), url.substr(path_start)};
}

} // namespace

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
    parse_url(options_.endpoint);
    if (options_.model.empty()) {
        throw Error(ErrorKind::ConfigError, "http backend needs a model name");
    }
}

std::string HttpBackend::fingerprint() const {
    return "http:" + options_.endpoint + "|" + options_.model;
}

BackendReply HttpBackend::complete(const ChatRequest& request) {
    const ParsedUrl url = parse_url(options_.endpoint);
    httplib::Client client(url.origin);
    client.set_connection_timeout(options_.timeout);
    client.set_read_timeout(options_.timeout);

    httplib::Headers headers;
    if (!options_.api_key_env.empty()) {
        if (const char* token = std::getenv(options_.api_key_env.c_str()); token != nullptr && *token != '\0') {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
    }

    const Json body = {
        {"model", options_.model},
        {"messages", Json::array({Json{{"role", "user"}, {"content", request.rendered_prompt}}})},
        {"max_tokens", request.max_output_tokens},
        {"temperature", request.temperature},
    };

    const auto started = std::chrono::steady_clock::now();
    const auto res = client.Post(url.path, headers, body.dump(), "application/json");
    const double latency =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();

    if (!res) {
        throw Error(ErrorKind::BackendError, "transport failure: " + httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500) {
        throw Error(ErrorKind::BackendError, "endpoint returned HTTP " + std::to_string(res->status));
    }
    if (res->status != 200) {
        throw Error(ErrorKind::ParseError, "endpoint returned HTTP " + std::to_string(res->status) + ": " + res->body);
    }

    BackendReply reply;
    reply.latency_ms = latency;
    try {
        const Json payload = Json::parse(res->body);
        reply.text = payload.at("choices").at(0).at("message").at("content").get<std::string>();
        if (payload.contains("usage")) {
            const auto& usage = payload["usage"];
            if (usage.contains("prompt_tokens")) reply.tokens_in = usage["prompt_tokens"].get<std::size_t>();
            if (usage.contains("completion_tokens")) reply.tokens_out = usage["completion_tokens"].get<std::size_t>();
        }
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::ParseError, std::string("malformed chat completion response: ") + e.what());
    }
    return reply;
}

} // namespace casework::llm
