#pragma once

#include <string>
#include <string_view>

namespace casework {

/// Lowercase hex SHA-256 of `data`.
std::string sha256_hex(std::string_view data);

/// Incremental digest over several fields; each field is length-prefixed so
/// ("ab","c") and ("a","bc") hash differently.
class DigestBuilder {
public:
    DigestBuilder& add(std::string_view field);
    std::string hex() const;

private:
    std::string buffer_;
};

} // namespace casework
