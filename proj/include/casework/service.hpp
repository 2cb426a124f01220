#pragma once

#include "casework/config.hpp"
#include "casework/json_io.hpp"
#include "casework/llm.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace casework::pipeline {

/// JSON-over-HTTP front end for the pipeline:
///   POST /cases                                    {bundle_path} -> {case_id}
///   GET  /cases/{id}                               status and stage freshness
///   GET  /cases/{id}/stages/{stage}                stage output envelope
///   POST /cases/{id}/stages/{stage}/rerun          resume_stage
///   POST /cases/{id}/sections/{section}/regenerate regenerate one section
///   GET  /cases/{id}/instruction                   instruction.md
///   GET  /cases/{id}/report                        last run report
/// Work runs on a pool of `config.workers` threads; jobs for one case are
/// serialized.
class CaseService {
public:
    explicit CaseService(PipelineConfig config, std::shared_ptr<llm::LlmBackend> backend = nullptr);
    ~CaseService();
    CaseService(const CaseService&) = delete;
    CaseService& operator=(const CaseService&) = delete;

    /// Binds and serves on a background thread; returns the bound port
    /// (pass 0 to pick a free one).
    int start(const std::string& host, int port);
    /// Serves on the calling thread until stop().
    void listen(const std::string& host, int port);
    void stop();

    /// Blocks until no job is queued or running.
    void wait_idle();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace casework::pipeline
