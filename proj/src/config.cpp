#include "casework/config.hpp"

#include "casework/error.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>

namespace casework {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

void require_file(const std::filesystem::path& p, const std::string& what) {
    if (!std::filesystem::is_regular_file(p)) {
        throw Error(ErrorKind::ConfigError, what + " not found: " + p.string());
    }
}

template <typename T>
void take(const Json& j, const char* key, T& target) {
    if (j.contains(key) && !j.at(key).is_null()) target = j.at(key).get<T>();
}

} // namespace

PipelineConfig PipelineConfig::from_json(const Json& j, const std::filesystem::path& base_dir) {
    PipelineConfig c;
    try {
        if (j.contains("workspace_root")) c.workspace_root = resolve(base_dir, j["workspace_root"].get<std::string>());
        else c.workspace_root = resolve(base_dir, c.workspace_root.string());

        if (j.contains("llm")) {
            const Json& l = j["llm"];
            take(l, "backend", c.llm.backend);
            if (l.contains("transcript")) c.llm.transcript = resolve(base_dir, l["transcript"].get<std::string>());
            take(l, "endpoint", c.llm.http.endpoint);
            take(l, "model", c.llm.http.model);
            take(l, "api_key_env", c.llm.http.api_key_env);
            if (l.contains("timeout_s")) c.llm.http.timeout = std::chrono::seconds(l["timeout_s"].get<int>());
        }
        take(j, "context_budget_tokens", c.context_budget_tokens);
        take(j, "max_output_tokens", c.max_output_tokens);
        take(j, "temperature", c.temperature);
        if (j.contains("rate_limit_rpm") && !j["rate_limit_rpm"].is_null()) c.rate_limit_rpm = j["rate_limit_rpm"].get<double>();
        if (j.contains("retry")) {
            take(j["retry"], "attempts", c.retry_attempts);
            take(j["retry"], "base_delay_ms", c.retry_base_delay_ms);
        }
        if (j.contains("pricing")) {
            take(j["pricing"], "input_per_1k_tokens", c.pricing.input_per_1k_tokens);
            take(j["pricing"], "output_per_1k_tokens", c.pricing.output_per_1k_tokens);
        }
        if (j.contains("corpora")) {
            for (const auto& [name, paths] : j["corpora"].items()) {
                const CorpusId id = corpus_from_string(name);
                if (id == CorpusId::CaseDocuments) {
                    throw Error(ErrorKind::ConfigError, "the case corpus is built from the bundle, not configured");
                }
                const auto list = paths.is_array() ? paths.get<std::vector<std::string>>()
                                                   : std::vector<std::string>{paths.get<std::string>()};
                for (const auto& p : list) c.corpora[id].push_back(resolve(base_dir, p));
            }
        }
        if (j.contains("chunk")) {
            take(j["chunk"], "window_tokens", c.chunk.window_tokens);
            take(j["chunk"], "overlap_tokens", c.chunk.overlap_tokens);
        }
        take(j, "page_chars", c.page_chars);
        if (j.contains("quality_veto_threshold") && !j["quality_veto_threshold"].is_null()) {
            c.quality_veto_threshold = j["quality_veto_threshold"].get<double>();
        }
        if (j.contains("form_schema")) {
            const Json& s = j["form_schema"];
            if (s.is_string()) {
                const auto path = resolve(base_dir, s.get<std::string>());
                require_file(path, "form schema");
                c.form_schema = extraction::FormSchema::from_json(read_json_file(path));
            } else {
                c.form_schema = extraction::FormSchema::from_json(s);
            }
        }
        take(j, "crafted_queries", c.crafted_queries);
        if (j.contains("allegation_example")) {
            const Json& e = j["allegation_example"];
            if (e.is_object() && e.contains("path")) {
                const auto path = resolve(base_dir, e["path"].get<std::string>());
                require_file(path, "allegation example");
                c.allegation_example = read_file(path);
            } else {
                c.allegation_example = e.get<std::string>();
            }
        }
        take(j, "active_contract_keywords", c.periculum.active.keywords);
        take(j, "contract_status_query", c.periculum.active.query);
        take(j, "delay_max_document_calls", c.periculum.delay.max_document_calls);
        take(j, "delay_batch_size", c.periculum.delay.batch_size);
        take(j, "admissibility_max_steps", c.admissibility_max_steps);
        take(j, "fumus_max_steps", c.fumus_max_steps);
        take(j, "retrieval_top_k", c.retrieval_top_k);
        c.periculum.active.top_k = c.retrieval_top_k;
        if (j.contains("guidelines")) c.guidelines = recommendations::Guidelines::from_json(j["guidelines"]);
        if (j.contains("generated_at") && !j["generated_at"].is_null()) c.generated_at = j["generated_at"].get<std::string>();
        take(j, "workers", c.workers);
        take(j, "api_token_env", c.api_token_env);
    } catch (const Json::exception& e) {
        throw Error(ErrorKind::ConfigError, std::string("invalid config value: ") + e.what());
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::ConfigError) throw;
        throw Error(ErrorKind::ConfigError, e.what());
    }
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    require_file(path, "config file");
    Json j;
    try {
        j = read_json_file(path);
    } catch (const Error& e) {
        throw Error(ErrorKind::ConfigError, e.what());
    }
    return from_json(j, std::filesystem::absolute(path).parent_path());
}

void PipelineConfig::validate() const {
    const auto fail = [](const std::string& msg) { throw Error(ErrorKind::ConfigError, msg); };
    if (context_budget_tokens < 1024) fail("context_budget_tokens must be at least 1024");
    if (max_output_tokens == 0 || max_output_tokens >= context_budget_tokens) {
        fail("max_output_tokens must be positive and below the context budget");
    }
    if (retry_attempts < 1) fail("retry.attempts must be at least 1");
    if (rate_limit_rpm && *rate_limit_rpm <= 0) fail("rate_limit_rpm must be positive");
    if (page_chars == 0) fail("page_chars must be positive");
    if (retrieval_top_k == 0) fail("retrieval_top_k must be positive");
    if (admissibility_max_steps == 0 || fumus_max_steps == 0) fail("agent step budgets must be positive");
    if (periculum.delay.batch_size == 0) fail("delay_batch_size must be positive");
    if (chunk.window_tokens == 0 || chunk.overlap_tokens >= chunk.window_tokens) fail("invalid chunk options");
    if (workers == 0) fail("workers must be positive");
    if (llm.backend == "scripted") {
        require_file(llm.transcript, "scripted transcript");
    } else if (llm.backend == "http") {
        if (llm.http.endpoint.empty() || llm.http.model.empty()) fail("http backend needs endpoint and model");
    } else {
        fail("unknown llm backend '" + llm.backend + "'");
    }
    for (const auto& [_, paths] : corpora) {
        for (const auto& p : paths) require_file(p, "corpus file");
    }
    form_schema.validate();
}

llm::GatewayOptions PipelineConfig::gateway_options() const {
    llm::GatewayOptions o;
    o.context_budget = context_budget_tokens;
    o.max_output_tokens = max_output_tokens;
    o.temperature = temperature;
    o.retry_attempts = retry_attempts;
    o.retry_base_delay = std::chrono::milliseconds(retry_base_delay_ms);
    if (rate_limit_rpm) o.rate_limiter = std::make_shared<llm::RateLimiter>(*rate_limit_rpm);
    return o;
}

std::shared_ptr<llm::LlmBackend> PipelineConfig::make_backend() const {
    if (llm.backend == "http") return std::make_shared<llm::HttpBackend>(llm.http);
    return std::make_shared<llm::ScriptedBackend>(llm::ScriptedBackend::from_file(llm.transcript));
}

std::string PipelineConfig::resolve_generated_at() const {
    if (generated_at) return *generated_at;
    std::time_t t = std::time(nullptr);
    if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH"); epoch != nullptr && *epoch != '\0') {
        t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
    }
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

} // namespace casework
