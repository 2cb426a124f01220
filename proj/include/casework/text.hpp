#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

// UTF-8 helpers shared by ingestion, retrieval and the parsers. Case folding
// and word segmentation cover Latin (incl. Portuguese diacritics), Greek and
// Cyrillic; other scripts are treated as word characters unless they fall in
// the general punctuation/symbol blocks.
namespace casework::text {

inline constexpr char32_t kReplacementChar = 0xFFFD;

struct DecodedText {
    std::u32string code_points;
    std::size_t malformed_sequences = 0;
};

/// Malformed byte sequences decode to U+FFFD, one per offending byte.
DecodedText decode_utf8(std::string_view bytes);
void append_utf8(std::string& out, char32_t cp);
std::string encode_utf8(std::u32string_view cps);

struct CharStats {
    std::size_t total = 0;
    std::size_t invalid = 0;
    std::size_t searchable = 0;
};

/// Invalid: U+FFFD or a control character other than \n, \r, \t and the
/// form feed that separates pages.
/// Searchable: neither invalid nor whitespace.
bool is_invalid_char(char32_t cp);
bool is_whitespace(char32_t cp);
bool is_searchable_char(char32_t cp);
CharStats char_stats(std::string_view bytes);
std::size_t code_point_count(std::string_view bytes);

char32_t to_lower(char32_t cp);
std::string to_lower(std::string_view bytes);
bool is_word_char(char32_t cp);

struct TokenSpan {
    std::size_t begin = 0; // byte offsets into the source
    std::size_t end = 0;
    std::string term;      // lowercased
};

std::vector<TokenSpan> token_spans(std::string_view bytes);
std::vector<std::string> tokenize(std::string_view bytes);

/// Byte length of the first `n` code points (or the whole string).
std::size_t prefix_bytes_for_code_points(std::string_view bytes, std::size_t n);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split_lines(std::string_view s);
bool contains_icase(std::string_view haystack, std::string_view needle);
bool starts_with_icase(std::string_view s, std::string_view prefix);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

} // namespace casework::text
