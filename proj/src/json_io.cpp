#include "casework/json_io.hpp"

#include "casework/error.hpp"

#include <fstream>
#include <sstream>

namespace fs = std::filesystem;

namespace casework {

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file_atomic(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorKind::IoError, "cannot write " + tmp.string());
        }
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            throw Error(ErrorKind::IoError, "short write to " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        throw Error(ErrorKind::IoError, "rename " + tmp.string() + ": " + ec.message());
    }
}

Json read_json_file(const fs::path& path) {
    const std::string content = read_file(path);
    try {
        return Json::parse(content);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
}

void write_json_atomic(const fs::path& path, const Json& value) {
    write_file_atomic(path, canonical_dump(value));
}

std::string canonical_dump(const Json& value) {
    return value.dump(2, ' ', false, Json::error_handler_t::replace) + "\n";
}

} // namespace casework
