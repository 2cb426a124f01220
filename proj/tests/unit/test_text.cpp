#include "support.hpp"

#include "casework/digest.hpp"
#include "casework/error.hpp"
#include "casework/json_io.hpp"
#include "casework/text.hpp"

#include <doctest.h>

using namespace casework;

TEST_CASE("utf-8 decoding replaces each malformed byte") {
    const auto d = text::decode_utf8("a\xff\xfe" "b");
    CHECK(d.malformed_sequences == 2);
    CHECK(d.code_points == U"a��b");
    CHECK(text::encode_utf8(U"ação") == "ação");
}

TEST_CASE("char stats classify invalid and searchable characters") {
    const auto s = text::char_stats("ab \t\n\x01\xef\xbf\xbd");
    CHECK(s.total == 7);
    CHECK(s.invalid == 2);
    CHECK(s.searchable == 2);
    CHECK(text::char_stats("   \n").searchable == 0);
}

TEST_CASE("tokenize lowercases Portuguese words and drops punctuation") {
    CHECK(text::tokenize("Licitação, CONTRATO nº 42!") ==
          std::vector<std::string>{"licitação", "contrato", "nº", "42"});
    CHECK(text::tokenize(" ... ").empty());
    const auto spans = text::token_spans("Olá mundo");
    REQUIRE(spans.size() == 2);
    CHECK(std::string("Olá mundo").substr(spans[1].begin, spans[1].end - spans[1].begin) == "mundo");
}

TEST_CASE("line and case helpers") {
    CHECK(text::trim("  x y \n") == "x y");
    CHECK(text::split_lines("a\r\nb\nc").size() == 3);
    CHECK(text::contains_icase("MINUTA DE CONTRATO", "minuta de contrato"));
    CHECK(text::starts_with_icase("Answer: yes", "answer:"));
    CHECK(text::prefix_bytes_for_code_points("ção", 2) == 4);
}

TEST_CASE("sha256 matches a published test vector") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("digest builder separates fields") {
    CHECK(DigestBuilder().add("ab").add("c").hex() != DigestBuilder().add("a").add("bc").hex());
    CHECK(DigestBuilder().add("x").hex() == DigestBuilder().add("x").hex());
}

TEST_CASE("atomic json write round-trips canonically") {
    testsupport::TempDir dir;
    const auto path = dir.path() / "sub" / "x.json";
    const Json value{{"b", 1}, {"a", {1, 2}}};
    write_json_atomic(path, value);
    CHECK(read_json_file(path) == value);
    CHECK(read_file(path) == canonical_dump(value));
    CHECK(canonical_dump(value).back() == '\n');
    CHECK_THROWS_AS(read_file(dir.path() / "missing"), Error);
}
