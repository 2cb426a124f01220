#include "casework/llm.hpp"

#include "casework/digest.hpp"
#include "casework/error.hpp"
#include "casework/text.hpp"

#include <algorithm>
#include <mutex>
#include <thread>

namespace casework::llm {

namespace {

bool is_ident_start(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
}

bool is_ident_char(char c) {
    return is_ident_start(c) || (c >= '0' && c <= '9');
}

// Calls on_text for literal runs and on_var for each placeholder.
template <typename OnText, typename OnVar>
void scan_template(std::string_view body, OnText on_text, OnVar on_var) {
    std::size_t i = 0;
    while (i < body.size()) {
        const char c = body[i];
        if (c == '{' && i + 1 < body.size() && body[i + 1] == '{') {
            on_text(std::string_view("{"));
            i += 2;
            continue;
        }
        if (c == '}' && i + 1 < body.size() && body[i + 1] == '}') {
            on_text(std::string_view("}"));
            i += 2;
            continue;
        }
        if (c == '{' && i + 1 < body.size() && is_ident_start(body[i + 1])) {
            std::size_t j = i + 1;
            while (j < body.size() && is_ident_char(body[j])) {
                ++j;
            }
            if (j < body.size() && body[j] == '}') {
                on_var(body.substr(i + 1, j - i - 1));
                i = j + 1;
                continue;
            }
        }
        on_text(body.substr(i, 1));
        ++i;
    }
}

} // namespace

std::set<std::string> placeholders(std::string_view body) {
    std::set<std::string> names;
    scan_template(body, [](std::string_view) {}, [&](std::string_view name) { names.emplace(name); });
    return names;
}

PromptTemplate::PromptTemplate(std::string template_id, std::string body)
    : template_id_(std::move(template_id)), body_(std::move(body)), required_vars_(placeholders(body_)) {}

PromptTemplate::PromptTemplate(std::string template_id, std::string body, std::set<std::string> required_vars)
    : template_id_(std::move(template_id)), body_(std::move(body)), required_vars_(std::move(required_vars)) {
    if (placeholders(body_) != required_vars_) {
        throw Error(ErrorKind::InvalidTemplate,
                    "template '" + template_id_ + "': required variables do not match its placeholders");
    }
}

std::string render_prompt(const PromptTemplate& tmpl, const std::map<std::string, std::string>& vars) {
    for (const auto& name : tmpl.required_vars()) {
        if (vars.find(name) == vars.end()) {
            throw Error(ErrorKind::MissingVariable, name);
        }
    }
    std::string out;
    out.reserve(tmpl.body().size());
    scan_template(
        tmpl.body(), [&](std::string_view s) { out.append(s); },
        [&](std::string_view name) { out.append(vars.at(std::string(name))); });
    return out;
}

std::size_t ApproxTokenizer::count(std::string_view s) const {
    return (text::code_point_count(s) + 3) / 4;
}

std::size_t ApproxTokenizer::prefix_bytes(std::string_view s, std::size_t tokens) const {
    return text::prefix_bytes_for_code_points(s, tokens * 4);
}

std::string truncate_to_budget(std::string_view s, std::size_t budget_tokens, const Tokenizer& tokenizer) {
    require(budget_tokens >= 1, "token budget must be at least 1");
    if (tokenizer.count(s) <= budget_tokens) {
        return std::string(s);
    }
    return std::string(s.substr(0, tokenizer.prefix_bytes(s, budget_tokens)));
}

ChatRequest ChatRequest::make(std::string prompt, std::size_t max_output_tokens, double temperature,
                              const Tokenizer& tokenizer, std::size_t context_budget) {
    ChatRequest req;
    req.prompt_tokens = tokenizer.count(prompt);
    if (req.prompt_tokens + max_output_tokens > context_budget) {
        throw Error(ErrorKind::BudgetExceeded, "prompt of " + std::to_string(req.prompt_tokens) + " tokens plus " +
                                                   std::to_string(max_output_tokens) + " output tokens exceeds " +
                                                   std::to_string(context_budget));
    }
    req.request_key = sha256_hex(prompt);
    req.rendered_prompt = std::move(prompt);
    req.max_output_tokens = max_output_tokens;
    req.temperature = temperature;
    return req;
}

// ---------------------------------------------------------------------------

ScriptedBackend ScriptedBackend::from_json(const Json& transcript) {
    ScriptedBackend backend;
    backend.source_digest_ = sha256_hex(transcript.dump());
    const Json& entries = transcript.is_array() ? transcript : transcript.at("responses");
    for (const auto& entry : entries) {
        const std::string response = entry.at("response").get<std::string>();
        if (entry.contains("key")) {
            backend.exact_[entry["key"].get<std::string>()] = response;
            continue;
        }
        Pattern pattern;
        pattern.contains = entry.value("contains", std::vector<std::string>{});
        pattern.excludes = entry.value("excludes", std::vector<std::string>{});
        pattern.response = response;
        if (pattern.contains.empty()) {
            throw Error(ErrorKind::ParseError, "transcript pattern needs a key or a nonempty contains list");
        }
        backend.patterns_.push_back(std::move(pattern));
    }
    return backend;
}

ScriptedBackend ScriptedBackend::from_file(const std::filesystem::path& path) {
    return from_json(read_json_file(path));
}

void ScriptedBackend::add_exact(std::string request_key, std::string response) {
    exact_[std::move(request_key)] = std::move(response);
    source_digest_.clear();
}

void ScriptedBackend::add_pattern(std::vector<std::string> contains, std::vector<std::string> excludes,
                                  std::string response) {
    require(!contains.empty(), "a pattern needs at least one contains string");
    patterns_.push_back({std::move(contains), std::move(excludes), std::move(response)});
    source_digest_.clear();
}

std::string ScriptedBackend::fingerprint() const {
    if (!source_digest_.empty()) {
        return "scripted:" + source_digest_;
    }
    DigestBuilder digest;
    for (const auto& [key, response] : exact_) {
        digest.add(key).add(response);
    }
    for (const auto& p : patterns_) {
        digest.add(text::join(p.contains, "\x1f")).add(text::join(p.excludes, "\x1f")).add(p.response);
    }
    return "scripted:" + digest.hex();
}

BackendReply ScriptedBackend::complete(const ChatRequest& request) {
    if (const auto it = exact_.find(request.request_key); it != exact_.end()) {
        return BackendReply{it->second, std::nullopt, std::nullopt, 0.0};
    }
    const std::string& prompt = request.rendered_prompt;
    for (const auto& p : patterns_) {
        const bool all = std::all_of(p.contains.begin(), p.contains.end(),
                                     [&](const std::string& s) { return prompt.find(s) != std::string::npos; });
        const bool none = std::none_of(p.excludes.begin(), p.excludes.end(),
                                       [&](const std::string& s) { return prompt.find(s) != std::string::npos; });
        if (all && none) {
            return BackendReply{p.response, std::nullopt, std::nullopt, 0.0};
        }
    }
    std::string head = prompt.substr(0, std::min<std::size_t>(prompt.size(), 200));
    throw Error(ErrorKind::UnscriptedRequest, "no scripted response for request " + request.request_key +
                                                  " (prompt begins: \"" + head + "\")");
}

// ---------------------------------------------------------------------------

void to_json(Json& j, const AuditEntry& entry) {
    j = Json{{"stage", entry.stage},
             {"request_key", entry.request_key},
             {"tokens_in", entry.tokens_in},
             {"tokens_out", entry.tokens_out},
             {"latency_ms", entry.latency_ms}};
}

void from_json(const Json& j, AuditEntry& entry) {
    entry.stage = j.at("stage").get<std::string>();
    entry.request_key = j.at("request_key").get<std::string>();
    entry.tokens_in = j.at("tokens_in").get<std::size_t>();
    entry.tokens_out = j.at("tokens_out").get<std::size_t>();
    entry.latency_ms = j.at("latency_ms").get<double>();
}

struct LlmGateway::State {
    std::shared_ptr<LlmBackend> backend;
    GatewayOptions options;

    std::mutex audit_mutex;
    std::vector<AuditEntry> audit;
};

RateLimiter::RateLimiter(double requests_per_minute)
    : interval_(std::chrono::duration_cast<std::chrono::steady_clock::duration>(
          std::chrono::duration<double>(60.0 / requests_per_minute))) {
    require(requests_per_minute > 0.0, "requests_per_minute must be positive");
}

void RateLimiter::acquire() {
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(mutex_);
        slot = std::max(std::chrono::steady_clock::now(), next_slot_);
        next_slot_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

LlmGateway::LlmGateway(std::shared_ptr<LlmBackend> backend, GatewayOptions options)
    : state_(std::make_shared<State>()) {
    require(backend != nullptr, "gateway needs a backend");
    if (!options.tokenizer) {
        options.tokenizer = std::make_shared<ApproxTokenizer>();
    }
    require(options.max_output_tokens < options.context_budget, "output reservation must fit the context budget");
    require(options.retry_attempts >= 1, "retry_attempts must be at least 1");
    state_->backend = std::move(backend);
    state_->options = std::move(options);
}

LlmGateway::LlmGateway(std::shared_ptr<State> state, std::string stage)
    : state_(std::move(state)), stage_(std::move(stage)) {}

LlmGateway LlmGateway::with_stage(std::string stage) const {
    return LlmGateway(state_, std::move(stage));
}

const Tokenizer& LlmGateway::tokenizer() const { return *state_->options.tokenizer; }
const GatewayOptions& LlmGateway::options() const { return state_->options; }
const LlmBackend& LlmGateway::backend() const { return *state_->backend; }

std::size_t LlmGateway::prompt_budget() const {
    return state_->options.context_budget - state_->options.max_output_tokens;
}

ChatRequest LlmGateway::make_request(std::string prompt) const {
    const auto& o = state_->options;
    return ChatRequest::make(std::move(prompt), o.max_output_tokens, o.temperature, *o.tokenizer, o.context_budget);
}

ChatResponse LlmGateway::complete(const ChatRequest& request) {
    auto& st = *state_;
    const auto& o = st.options;
    require(request.prompt_tokens + request.max_output_tokens <= o.context_budget,
            "request exceeds the configured context budget");

    if (o.rate_limiter) {
        o.rate_limiter->acquire();
    }

    BackendReply reply;
    for (int attempt = 1;; ++attempt) {
        try {
            reply = st.backend->complete(request);
            break;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::BackendError || attempt >= o.retry_attempts) {
                throw;
            }
            std::this_thread::sleep_for(o.retry_base_delay * (1 << (attempt - 1)));
        }
    }

    ChatResponse response;
    response.tokens_in = reply.tokens_in.value_or(request.prompt_tokens);
    response.tokens_out = reply.tokens_out.value_or(o.tokenizer->count(reply.text));
    response.latency_ms = reply.latency_ms;
    response.text = std::move(reply.text);

    std::lock_guard lock(st.audit_mutex);
    st.audit.push_back(AuditEntry{stage_, request.request_key, response.tokens_in, response.tokens_out,
                                  response.latency_ms});
    return response;
}

std::vector<AuditEntry> LlmGateway::audit_entries() const {
    std::lock_guard lock(state_->audit_mutex);
    return state_->audit;
}

std::vector<AuditEntry> LlmGateway::audit_entries(std::string_view stage) const {
    std::lock_guard lock(state_->audit_mutex);
    std::vector<AuditEntry> out;
    std::copy_if(state_->audit.begin(), state_->audit.end(), std::back_inserter(out),
                 [&](const AuditEntry& e) { return e.stage == stage; });
    return out;
}

std::size_t LlmGateway::audit_mark() const {
    std::lock_guard lock(state_->audit_mutex);
    return state_->audit.size();
}

std::vector<AuditEntry> LlmGateway::audit_entries_since(std::size_t mark) const {
    std::lock_guard lock(state_->audit_mutex);
    if (mark >= state_->audit.size()) {
        return {};
    }
    return {state_->audit.begin() + static_cast<std::ptrdiff_t>(mark), state_->audit.end()};
}

std::size_t LlmGateway::total_tokens_in() const {
    std::lock_guard lock(state_->audit_mutex);
    std::size_t total = 0;
    for (const auto& e : state_->audit) total += e.tokens_in;
    return total;
}

std::size_t LlmGateway::total_tokens_out() const {
    std::lock_guard lock(state_->audit_mutex);
    std::size_t total = 0;
    for (const auto& e : state_->audit) total += e.tokens_out;
    return total;
}

} // namespace casework::llm
