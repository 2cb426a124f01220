#pragma once

#include "casework/json_io.hpp"

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace casework::llm {

// ---------------------------------------------------------------------------
// Templates

/// A prompt with `{name}` placeholders. `{{` and `}}` render as literal braces.
class PromptTemplate {
public:
    /// Collects required variables from the body.
    PromptTemplate(std::string template_id, std::string body);
    /// Throws InvalidTemplate unless `required_vars` equals the placeholder set.
    PromptTemplate(std::string template_id, std::string body, std::set<std::string> required_vars);

    const std::string& template_id() const { return template_id_; }
    const std::string& body() const { return body_; }
    const std::set<std::string>& required_vars() const { return required_vars_; }

private:
    std::string template_id_;
    std::string body_;
    std::set<std::string> required_vars_;
};

std::set<std::string> placeholders(std::string_view body);

/// Single pass: substituted values are never rescanned. Unknown variables in
/// `vars` are ignored; a missing one throws MissingVariable.
std::string render_prompt(const PromptTemplate& tmpl, const std::map<std::string, std::string>& vars);

// ---------------------------------------------------------------------------
// Token budgeting

class Tokenizer {
public:
    virtual ~Tokenizer() = default;
    virtual std::size_t count(std::string_view text) const = 0;
    /// Byte length of the prefix holding the first `tokens` tokens.
    virtual std::size_t prefix_bytes(std::string_view text, std::size_t tokens) const = 0;
};

/// Upper-bound estimate: one token per four code points, rounded up.
class ApproxTokenizer final : public Tokenizer {
public:
    std::size_t count(std::string_view text) const override;
    std::size_t prefix_bytes(std::string_view text, std::size_t tokens) const override;
};

/// Longest token-boundary prefix of `text` fitting in `budget_tokens`.
std::string truncate_to_budget(std::string_view text, std::size_t budget_tokens, const Tokenizer& tokenizer);

// ---------------------------------------------------------------------------
// Requests and backends

struct ChatRequest {
    std::string rendered_prompt;
    std::size_t max_output_tokens = 0;
    double temperature = 0.0;
    std::string request_key; // sha256 of rendered_prompt
    std::size_t prompt_tokens = 0;

    /// Throws BudgetExceeded when prompt tokens + max_output_tokens exceed
    /// `context_budget`.
    static ChatRequest make(std::string prompt, std::size_t max_output_tokens, double temperature,
                            const Tokenizer& tokenizer, std::size_t context_budget);
};

struct BackendReply {
    std::string text;
    std::optional<std::size_t> tokens_in;
    std::optional<std::size_t> tokens_out;
    double latency_ms = 0.0;
};

struct ChatResponse {
    std::string text;
    std::size_t tokens_in = 0;
    std::size_t tokens_out = 0;
    double latency_ms = 0.0;
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual std::string name() const = 0;
    /// Identifies what determines this backend's answers (transcript digest,
    /// endpoint + model); feeds stage staleness checks.
    virtual std::string fingerprint() const = 0;
    /// Transport problems throw BackendError and are retried by the gateway;
    /// anything else is final.
    virtual BackendReply complete(const ChatRequest& request) = 0;
};

/// Deterministic test double. Exact request keys are consulted first, then
/// patterns in declaration order; a pattern matches when the prompt contains
/// every `contains` string and none of the `excludes` strings. No match is
/// an UnscriptedRequest error.
class ScriptedBackend final : public LlmBackend {
public:
    struct Pattern {
        std::vector<std::string> contains;
        std::vector<std::string> excludes;
        std::string response;
    };

    ScriptedBackend() = default;
    static ScriptedBackend from_json(const Json& transcript);
    static ScriptedBackend from_file(const std::filesystem::path& path);

    void add_exact(std::string request_key, std::string response);
    void add_pattern(std::vector<std::string> contains, std::vector<std::string> excludes, std::string response);
    void add_pattern(std::vector<std::string> contains, std::string response) {
        add_pattern(std::move(contains), {}, std::move(response));
    }

    std::string name() const override { return "scripted"; }
    std::string fingerprint() const override;
    BackendReply complete(const ChatRequest& request) override;

private:
    std::map<std::string, std::string> exact_;
    std::vector<Pattern> patterns_;
    std::string source_digest_;
};

struct HttpBackendOptions {
    std::string endpoint;             // full URL of a chat-completions endpoint
    std::string model;
    std::string api_key_env;          // name of the environment variable holding the token
    std::chrono::seconds timeout{120};
};

/// OpenAI-style JSON chat completion over HTTP(S).
class HttpBackend final : public LlmBackend {
public:
    explicit HttpBackend(HttpBackendOptions options);
    std::string name() const override { return "http"; }
    std::string fingerprint() const override;
    BackendReply complete(const ChatRequest& request) override;

private:
    HttpBackendOptions options_;
};

// ---------------------------------------------------------------------------
// Gateway

struct AuditEntry {
    std::string stage;
    std::string request_key;
    std::size_t tokens_in = 0;
    std::size_t tokens_out = 0;
    double latency_ms = 0.0;
};

void to_json(Json& j, const AuditEntry& entry);
void from_json(const Json& j, AuditEntry& entry);

/// Spaces requests at least 60/rpm seconds apart across all holders.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_minute);
    void acquire();

private:
    std::chrono::steady_clock::duration interval_;
    std::mutex mutex_;
    std::chrono::steady_clock::time_point next_slot_{};
};

struct GatewayOptions {
    std::size_t context_budget = 32000;
    std::size_t max_output_tokens = 1024;
    double temperature = 0.0;
    int retry_attempts = 3;
    std::chrono::milliseconds retry_base_delay{500};
    std::shared_ptr<const Tokenizer> tokenizer;
    std::shared_ptr<RateLimiter> rate_limiter; // may be shared by several gateways
};

/// The only path from stages to a model. Copies share backend and audit
/// log; `with_stage` returns a copy that labels its audit entries with a
/// different stage.
class LlmGateway {
public:
    LlmGateway(std::shared_ptr<LlmBackend> backend, GatewayOptions options = {});

    LlmGateway with_stage(std::string stage) const;
    const std::string& stage() const { return stage_; }

    const Tokenizer& tokenizer() const;
    const GatewayOptions& options() const;
    const LlmBackend& backend() const;
    /// Tokens available for a prompt once the output reservation is made.
    std::size_t prompt_budget() const;

    ChatRequest make_request(std::string prompt) const;
    ChatResponse complete(const ChatRequest& request);
    ChatResponse complete(std::string prompt) { return complete(make_request(std::move(prompt))); }

    std::vector<AuditEntry> audit_entries() const;
    std::vector<AuditEntry> audit_entries(std::string_view stage) const;
    /// Position in the audit log; pairs with audit_entries_since.
    std::size_t audit_mark() const;
    std::vector<AuditEntry> audit_entries_since(std::size_t mark) const;
    std::size_t total_tokens_in() const;
    std::size_t total_tokens_out() const;

private:
    struct State;
    LlmGateway(std::shared_ptr<State> state, std::string stage);

    std::shared_ptr<State> state_;
    std::string stage_ = "default";
};

} // namespace casework::llm
