#pragma once

#include "casework/info_extraction.hpp"
#include "casework/json_io.hpp"
#include "casework/llm.hpp"
#include "casework/precautionary.hpp"
#include "casework/recommendations.hpp"
#include "casework/retrieval.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace casework {

struct LlmConfig {
    std::string backend = "scripted"; // "scripted" | "http"
    std::filesystem::path transcript;  // scripted
    llm::HttpBackendOptions http;      // http
};

struct Pricing {
    double input_per_1k_tokens = 0.0;
    double output_per_1k_tokens = 0.0;
};

/// Everything a run depends on, loaded from one JSON file. Relative paths
/// resolve against the file's directory; secrets only come from the
/// environment.
struct PipelineConfig {
    std::filesystem::path workspace_root = "workspaces";
    LlmConfig llm;
    std::size_t context_budget_tokens = 32000;
    std::size_t max_output_tokens = 1024;
    double temperature = 0.0;
    std::optional<double> rate_limit_rpm;
    int retry_attempts = 3;
    int retry_base_delay_ms = 500;
    Pricing pricing;

    /// External corpora as JSON-lines files; the case corpus is built from
    /// the bundle.
    std::map<CorpusId, std::vector<std::filesystem::path>> corpora;
    retrieval::ChunkOptions chunk;
    std::size_t page_chars = 3000;
    std::optional<double> quality_veto_threshold;

    extraction::FormSchema form_schema = extraction::FormSchema::default_schema();
    std::map<std::string, std::string> crafted_queries;
    std::string allegation_example = extraction::default_allegation_example();
    precautionary::PericulumOptions periculum;
    std::size_t admissibility_max_steps = 6;
    std::size_t fumus_max_steps = 6;
    std::size_t retrieval_top_k = 5;
    recommendations::Guidelines guidelines;
    /// Timestamp written into instruction.json; falls back to
    /// SOURCE_DATE_EPOCH, then the current time.
    std::optional<std::string> generated_at;

    std::size_t workers = 2;
    std::string api_token_env; // service: static token variable, empty = open

    /// Throws ConfigError on invalid values or missing referenced files.
    static PipelineConfig from_json(const Json& j, const std::filesystem::path& base_dir);
    static PipelineConfig load(const std::filesystem::path& path);

    void validate() const;
    llm::GatewayOptions gateway_options() const;
    std::shared_ptr<llm::LlmBackend> make_backend() const;
    std::string resolve_generated_at() const;
};

} // namespace casework
