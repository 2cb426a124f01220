#include "casework/text.hpp"

#include <algorithm>

namespace casework::text {

DecodedText decode_utf8(std::string_view bytes) {
    DecodedText out;
    out.code_points.reserve(bytes.size());
    std::size_t i = 0;
    const std::size_t n = bytes.size();
    while (i < n) {
        const auto b0 = static_cast<unsigned char>(bytes[i]);
        if (b0 < 0x80) {
            out.code_points.push_back(b0);
            ++i;
            continue;
        }
        std::size_t len = 0;
        char32_t cp = 0;
        char32_t min_cp = 0;
        if ((b0 & 0xE0) == 0xC0) {
            len = 2; cp = b0 & 0x1F; min_cp = 0x80;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3; cp = b0 & 0x0F; min_cp = 0x800;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4; cp = b0 & 0x07; min_cp = 0x10000;
        }
        bool ok = len != 0 && i + len <= n;
        for (std::size_t k = 1; ok && k < len; ++k) {
            const auto b = static_cast<unsigned char>(bytes[i + k]);
            if ((b & 0xC0) != 0x80) {
                ok = false;
            } else {
                cp = (cp << 6) | (b & 0x3F);
            }
        }
        if (ok && (cp < min_cp || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) {
            ok = false;
        }
        if (!ok) {
            out.code_points.push_back(kReplacementChar);
            ++out.malformed_sequences;
            ++i;
            continue;
        }
        out.code_points.push_back(cp);
        i += len;
    }
    return out;
}

void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

std::string encode_utf8(std::u32string_view cps) {
    std::string out;
    out.reserve(cps.size());
    for (char32_t cp : cps) {
        append_utf8(out, cp);
    }
    return out;
}

bool is_invalid_char(char32_t cp) {
    if (cp == kReplacementChar) {
        return true;
    }
    if (cp == U'\n' || cp == U'\r' || cp == U'\t' || cp == U'\f') {
        return false;
    }
    return cp < 0x20 || (cp >= 0x7F && cp <= 0x9F);
}

bool is_whitespace(char32_t cp) {
    switch (cp) {
    case U' ': case U'\t': case U'\n': case U'\r': case U'\v': case U'\f':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000: case 0xFEFF:
        return true;
    default:
        return cp >= 0x2000 && cp <= 0x200B;
    }
}

bool is_searchable_char(char32_t cp) {
    return !is_invalid_char(cp) && !is_whitespace(cp);
}

CharStats char_stats(std::string_view bytes) {
    CharStats stats;
    for (char32_t cp : decode_utf8(bytes).code_points) {
        ++stats.total;
        if (is_invalid_char(cp)) {
            ++stats.invalid;
        } else if (!is_whitespace(cp)) {
            ++stats.searchable;
        }
    }
    return stats;
}

std::size_t code_point_count(std::string_view bytes) {
    return decode_utf8(bytes).code_points.size();
}

char32_t to_lower(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= U'A' && cp <= U'Z') ? cp + 32 : cp;
    }
    if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) {
        return cp + 0x20;
    }
    if (cp >= 0x100 && cp <= 0x17F) {
        if (cp == 0x130) return U'i';
        if (cp == 0x178) return 0xFF;
        const bool odd_upper = (cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E);
        if (odd_upper) {
            return (cp % 2 == 1) ? cp + 1 : cp;
        }
        if (cp == 0x131 || cp == 0x138 || cp == 0x149 || cp == 0x17F) {
            return cp;
        }
        return (cp % 2 == 0) ? cp + 1 : cp;
    }
    if (cp >= 0x391 && cp <= 0x3A9 && cp != 0x3A2) {
        return cp + 0x20;
    }
    if (cp >= 0x410 && cp <= 0x42F) {
        return cp + 0x20;
    }
    if (cp >= 0x400 && cp <= 0x40F) {
        return cp + 0x50;
    }
    return cp;
}

std::string to_lower(std::string_view bytes) {
    std::string out;
    out.reserve(bytes.size());
    for (char32_t cp : decode_utf8(bytes).code_points) {
        append_utf8(out, to_lower(cp));
    }
    return out;
}

bool is_word_char(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= U'0' && cp <= U'9') || (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z');
    }
    if (cp == 0xAA || cp == 0xB5 || cp == 0xBA) {
        return true;
    }
    if (cp < 0xC0) {
        return false;
    }
    if (cp == 0xD7 || cp == 0xF7) {
        return false;
    }
    if (cp <= 0x36F) {
        return true; // Latin letters, IPA, combining diacritics
    }
    if (cp == 0x37E || cp == 0x387 || cp == kReplacementChar || is_whitespace(cp)) {
        return false;
    }
    if ((cp >= 0x2000 && cp <= 0x2BFF) || (cp >= 0x3000 && cp <= 0x303F) ||
        (cp >= 0xFE30 && cp <= 0xFE4F) || (cp >= 0xFF00 && cp <= 0xFF0F) ||
        (cp >= 0xFF1A && cp <= 0xFF20) || (cp >= 0xE000 && cp <= 0xF8FF) ||
        (cp >= 0xFFF0)) {
        return false;
    }
    return true;
}

std::vector<TokenSpan> token_spans(std::string_view bytes) {
    std::vector<TokenSpan> spans;
    std::size_t i = 0;
    const std::size_t n = bytes.size();
    TokenSpan current;
    bool in_word = false;
    while (i < n) {
        // Decode one code point at i.
        const std::size_t len = prefix_bytes_for_code_points(bytes.substr(i), 1);
        const auto decoded = decode_utf8(bytes.substr(i, len));
        const char32_t cp = decoded.code_points.empty() ? kReplacementChar : decoded.code_points.front();
        if (is_word_char(cp)) {
            if (!in_word) {
                current = TokenSpan{i, i, {}};
                in_word = true;
            }
            append_utf8(current.term, to_lower(cp));
            current.end = i + len;
        } else if (in_word) {
            spans.push_back(std::move(current));
            in_word = false;
        }
        i += len;
    }
    if (in_word) {
        spans.push_back(std::move(current));
    }
    return spans;
}

std::vector<std::string> tokenize(std::string_view bytes) {
    std::vector<std::string> out;
    for (auto& span : token_spans(bytes)) {
        out.push_back(std::move(span.term));
    }
    return out;
}

std::size_t prefix_bytes_for_code_points(std::string_view bytes, std::size_t n) {
    std::size_t i = 0;
    std::size_t count = 0;
    while (i < bytes.size() && count < n) {
        const auto b0 = static_cast<unsigned char>(bytes[i]);
        std::size_t len = 1;
        if ((b0 & 0xE0) == 0xC0) len = 2;
        else if ((b0 & 0xF0) == 0xE0) len = 3;
        else if ((b0 & 0xF8) == 0xF0) len = 4;
        bool ok = i + len <= bytes.size();
        for (std::size_t k = 1; ok && k < len; ++k) {
            ok = (static_cast<unsigned char>(bytes[i + k]) & 0xC0) == 0x80;
        }
        i += ok ? len : 1;
        ++count;
    }
    return i;
}

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_lines(std::string_view s) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto pos = s.find('\n', start);
        if (pos == std::string_view::npos) {
            if (start < s.size()) {
                lines.push_back(s.substr(start));
            }
            break;
        }
        auto line = s.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        lines.push_back(line);
        start = pos + 1;
    }
    return lines;
}

bool contains_icase(std::string_view haystack, std::string_view needle) {
    return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
    return to_lower(s).rfind(to_lower(prefix), 0) == 0;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += sep;
        out += parts[i];
    }
    return out;
}

} // namespace casework::text
