#include "casework/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>
#include <stdexcept>

namespace casework {

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int md_len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &md_len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("EVP_Digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(md_len * 2);
    for (unsigned int i = 0; i < md_len; ++i) {
        out.push_back(kHex[md[i] >> 4]);
        out.push_back(kHex[md[i] & 0x0F]);
    }
    return out;
}

DigestBuilder& DigestBuilder::add(std::string_view field) {
    buffer_ += std::to_string(field.size());
    buffer_.push_back(':');
    buffer_.append(field);
    buffer_.push_back(';');
    return *this;
}

std::string DigestBuilder::hex() const {
    return sha256_hex(buffer_);
}

} // namespace casework
