#pragma once

#include "casework/config.hpp"
#include "casework/digest.hpp"
#include "casework/json_io.hpp"
#include "casework/llm.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <random>
#include <string>

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path source_dir() { return fs::path(CASEWORK_SOURCE_DIR); }
inline fs::path synthetic_dir() { return source_dir() / "data" / "synthetic"; }
inline fs::path synthetic_bundle() { return synthetic_dir() / "bundle"; }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::mt19937_64 rng(std::random_device{}());
        path_ = fs::temp_directory_path() / ("casework-test-" + std::to_string(rng()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

/// relative path -> sha256 of the bytes, for every regular file under root.
inline std::map<std::string, std::string> tree_digest(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        out[fs::relative(entry.path(), root).generic_string()] = casework::sha256_hex(casework::read_file(entry.path()));
    }
    return out;
}

/// The shipped synthetic configuration with its workspace root redirected.
inline casework::PipelineConfig synthetic_config(const fs::path& workspace_root) {
    auto j = casework::read_json_file(synthetic_dir() / "config.json");
    j["workspace_root"] = workspace_root.string();
    return casework::PipelineConfig::from_json(j, synthetic_dir());
}

inline std::shared_ptr<casework::llm::ScriptedBackend> scripted(const casework::Json& patterns) {
    return std::make_shared<casework::llm::ScriptedBackend>(
        casework::llm::ScriptedBackend::from_json(casework::Json{{"responses", patterns}}));
}

inline casework::Json pattern(std::vector<std::string> contains, std::string response,
                              std::vector<std::string> excludes = {}) {
    casework::Json p{{"contains", contains}, {"response", response}};
    if (!excludes.empty()) p["excludes"] = excludes;
    return p;
}

} // namespace testsupport
