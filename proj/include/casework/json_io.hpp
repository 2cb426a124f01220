#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace casework {

using Json = nlohmann::json;

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames over the target, so readers
/// never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

Json read_json_file(const std::filesystem::path& path);
void write_json_atomic(const std::filesystem::path& path, const Json& value);

/// Canonical text form used for digests and persisted outputs.
std::string canonical_dump(const Json& value);

} // namespace casework
