#pragma once

#include "casework/config.hpp"
#include "casework/json_io.hpp"
#include "casework/llm.hpp"
#include "casework/recommendations.hpp"

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace casework::pipeline {

enum class Stage { Ingest, BasicInfo, Allegations, Admissibility, Periculum, Fumus, Recommendations };

inline constexpr std::array<Stage, 7> kAllStages = {Stage::Ingest,        Stage::BasicInfo, Stage::Allegations,
                                                    Stage::Admissibility, Stage::Periculum, Stage::Fumus,
                                                    Stage::Recommendations};

inline constexpr int kSchemaVersion = 1;

/// snake_case stage name, also the stage file name.
std::string_view to_string(Stage s);
Stage stage_from_string(std::string_view s);

/// Direct upstream stages. The whole graph lives here.
const std::vector<Stage>& stage_dependencies(Stage s);
/// All transitive upstream stages, canonical order.
std::vector<Stage> upstream_of(Stage s);
/// `s` followed by every transitive dependent, canonical order.
std::vector<Stage> downstream_of(Stage s);

/// On-disk layout of one case:
///   case.json, extracted/, indexes/, stages/<stage>.json,
///   stages/<stage>.audit.jsonl, instruction.md, instruction.json, audit.log
class CaseWorkspace {
public:
    explicit CaseWorkspace(std::filesystem::path dir) : dir_(std::move(dir)) {}

    /// Case ids become directory names; unsafe characters turn into '_'.
    static std::string sanitize(std::string_view case_id);

    const std::filesystem::path& dir() const { return dir_; }
    std::filesystem::path case_file() const { return dir_ / "case.json"; }
    std::filesystem::path extracted_dir() const { return dir_ / "extracted"; }
    std::filesystem::path indexes_dir() const { return dir_ / "indexes"; }
    std::filesystem::path stages_dir() const { return dir_ / "stages"; }
    std::filesystem::path stage_file(Stage s) const;
    std::filesystem::path stage_audit_file(Stage s) const;
    std::filesystem::path instruction_md() const { return dir_ / "instruction.md"; }
    std::filesystem::path instruction_json() const { return dir_ / "instruction.json"; }
    std::filesystem::path audit_log() const { return dir_ / "audit.log"; }
    std::filesystem::path lock_file() const { return dir_ / ".lock"; }

    bool exists() const;
    std::string case_id() const;
    std::filesystem::path bundle_path() const;
    /// The stage envelope {schema_version, stage, inputs_digest, output}.
    std::optional<Json> read_stage(Stage s) const;

private:
    std::filesystem::path dir_;
};

/// Exclusive advisory lock on a workspace; throws Locked when another
/// writer holds it.
class WorkspaceLock {
public:
    explicit WorkspaceLock(const CaseWorkspace& ws);
    ~WorkspaceLock();
    WorkspaceLock(const WorkspaceLock&) = delete;
    WorkspaceLock& operator=(const WorkspaceLock&) = delete;

private:
    int fd_ = -1;
};

enum class StageStatus { Ran, Skipped, Failed, NotRun };
std::string_view to_string(StageStatus s);

struct StageReport {
    Stage stage = Stage::Ingest;
    StageStatus status = StageStatus::NotRun;
    double duration_ms = 0.0;
    std::size_t requests = 0;
    std::size_t tokens_in = 0;
    std::size_t tokens_out = 0;
    double estimated_cost = 0.0;
    std::string error;
};

struct RunReport {
    std::string case_id;
    std::filesystem::path workspace;
    std::vector<StageReport> stages;
    double total_ms = 0.0;
    std::optional<Stage> failed_stage;

    bool ok() const { return !failed_stage; }
    const StageReport* find(Stage s) const;
    Json to_json() const;
};

struct RunOptions {
    /// Stop cleanly after this stage, as if the process ended there.
    std::optional<Stage> stop_after;
};

enum class Freshness { Fresh, Stale, Missing };
std::string_view to_string(Freshness f);

class Pipeline {
public:
    /// `backend` overrides the one named in the config.
    explicit Pipeline(PipelineConfig config, std::shared_ptr<llm::LlmBackend> backend = nullptr);

    const PipelineConfig& config() const { return config_; }
    const llm::LlmBackend& backend() const { return *backend_; }

    CaseWorkspace workspace_for(std::string_view case_id) const;
    /// A workspace directory, or a case id under the workspace root.
    CaseWorkspace open_workspace(const std::string& case_or_dir) const;

    /// Validates the bundle, then runs every stage that is not fresh. A
    /// failing stage halts the run; earlier outputs stay on disk.
    RunReport run_case(const std::filesystem::path& bundle_dir, const RunOptions& options = {});
    /// Runs the remaining non-fresh stages of an existing workspace.
    RunReport continue_case(const CaseWorkspace& ws, const RunOptions& options = {});
    /// Reruns `stage` and all its dependents. Throws StaleUpstream when an
    /// upstream stage is not fresh.
    RunReport resume_stage(const CaseWorkspace& ws, Stage stage);
    /// Redrafts one instruction section from the current stage outputs.
    RunReport regenerate_section(const CaseWorkspace& ws, recommendations::SectionId section);

    std::string inputs_digest(const CaseWorkspace& ws, Stage stage) const;
    Freshness freshness(const CaseWorkspace& ws, Stage stage) const;

private:
    struct Context;
    StageReport execute(Context& ctx, Stage stage);
    void run_stage(Context& ctx, Stage stage, const std::string& digest);
    Json stage_config(Stage stage) const;
    void write_audit(const CaseWorkspace& ws, Stage stage, const std::vector<llm::AuditEntry>& entries,
                     bool append) const;
    void rebuild_audit_log(const CaseWorkspace& ws) const;
    CaseWorkspace init_workspace(const std::filesystem::path& bundle_dir, std::string& case_id) const;

    PipelineConfig config_;
    std::shared_ptr<llm::LlmBackend> backend_;
    llm::GatewayOptions gateway_options_;
};

} // namespace casework::pipeline
