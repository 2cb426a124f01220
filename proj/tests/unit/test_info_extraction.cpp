#include "support.hpp"

#include "casework/error.hpp"
#include "casework/info_extraction.hpp"

#include <doctest.h>

#include <random>
#include <set>

using namespace casework;
using namespace casework::extraction;
using testsupport::pattern;

namespace {

ingest::ExtractedDocument doc(std::string id, std::string text) {
    ingest::ExtractedDocument d;
    d.doc_id = std::move(id);
    d.text = std::move(text);
    d.total_char_count = d.text.size();
    d.page_count = ingest::count_pages(d.text, 3000);
    return d;
}

CaseText case_text(std::vector<ingest::ExtractedDocument> docs) {
    CaseText c;
    c.main_doc_id = docs.front().doc_id;
    c.documents = std::move(docs);
    return c;
}

retrieval::CorpusSet case_index(const CaseText& c) {
    std::vector<retrieval::IndexedPassage> passages;
    for (const auto& d : c.documents) {
        auto chunks = retrieval::chunk_document(CorpusId::CaseDocuments, d.doc_id, d.text);
        passages.insert(passages.end(), chunks.begin(), chunks.end());
    }
    retrieval::CorpusSet set;
    set.add(std::make_shared<const retrieval::Bm25Index>(retrieval::Bm25Index::build(passages)));
    return set;
}

FormSchema small_schema(std::vector<std::string> names) {
    FormSchema s;
    for (auto& n : names) s.fields.push_back({n, "value of " + n, false});
    return s;
}

std::set<std::string> keys(const FilledForm& f) {
    std::set<std::string> out;
    for (const auto& [k, v] : f.fields) out.insert(k);
    return out;
}

std::set<std::string> names(const FormSchema& s) {
    std::set<std::string> out;
    for (const auto& f : s.fields) out.insert(f.name);
    return out;
}

void check_form_invariants(const FilledForm& form, const FormSchema& schema) {
    CHECK(keys(form) == names(schema));
    for (const auto& [name, fv] : form.fields) {
        CAPTURE(name);
        CHECK(fv.value.has_value() == fv.provenance.has_value());
    }
}

} // namespace

TEST_CASE("default schema") {
    const auto s = FormSchema::default_schema();
    CHECK(s.fields.size() == 26);
    CHECK_NOTHROW(s.validate());
    CHECK(s.find("contract_value") != nullptr);
    CHECK(s.find("case_summary")->required);
    const auto copy = FormSchema::from_json(s.to_json());
    CHECK(names(copy) == names(s));

    CHECK_THROWS_WITH_AS(FormSchema{}.validate(), doctest::Contains("ConfigError"), Error);
    CHECK_THROWS_AS(small_schema({"a", "a"}).validate(), Error);
    CHECK_THROWS_AS(small_schema({"a:b"}).validate(), Error);
}

TEST_CASE("form line parsing") {
    const std::vector<std::string> allowed = {"case_id", "contract_value", "rapporteur"};
    const auto p = parse_form_lines("- case_id: TC 018.734/2024-1\n"
                                    "contract_value: R$ 1.000,00 [source 2]\n"
                                    "rapporteur: UNKNOWN\n"
                                    "other_field: ignored\n"
                                    "case_id: second occurrence ignored\n"
                                    "free text without a colon\n",
                                    allowed);
    REQUIRE(p.size() == 3);
    CHECK(p.at("case_id").value == "TC 018.734/2024-1");
    CHECK(!p.at("case_id").source);
    CHECK(p.at("contract_value").value == "R$ 1.000,00");
    CHECK(p.at("contract_value").source == 2u);
    CHECK(!p.at("rapporteur").value);
    CHECK(parse_form_lines("nothing here", allowed).empty());
    // A bracket that is not a citation stays part of the value.
    CHECK(parse_form_lines("case_id: x [note]", allowed).at("case_id").value == "x [note]");
}

TEST_CASE("all fields on the first pages: no search calls") {
    const auto schema = FormSchema::default_schema();
    std::string reply;
    for (const auto& f : schema.fields) reply += f.name + ": valor de " + f.name + "\n";
    const auto c = case_text({doc("main", "Representação com todos os dados."), doc("annex", "anexo")});
    const auto corpora = case_index(c);
    llm::LlmGateway gw(testsupport::scripted(Json::array({pattern({"## Document excerpt"}, reply)})));
    const auto form = extract_basic_info(c, schema, corpora, gw);
    CHECK(corpora.search_calls() == 0);
    CHECK(gw.audit_entries().size() == 1);
    CHECK(form.missing(schema).empty());
    for (const auto& [name, fv] : form.fields) {
        CHECK(fv.provenance == Provenance::FirstPages);
        CHECK(fv.source_doc_id == "main");
    }
    check_form_invariants(form, schema);
}

TEST_CASE("phase one sees only the first two pages") {
    const auto schema = small_schema({"case_id"});
    const std::string main_text = "primeira\fsegunda\fterceira-pagina-secreta";
    const auto c = case_text({doc("main", main_text)});
    llm::LlmGateway gw(testsupport::scripted(Json::array(
        {pattern({"terceira-pagina-secreta"}, "case_id: leaked"), pattern({"## Document excerpt", "segunda"}, "case_id: ok")})));
    const auto form = extract_basic_info(c, schema, case_index(c), gw);
    CHECK(form.fields.at("case_id").value == "ok");
}

TEST_CASE("a value missing from the first pages is found by a composed query") {
    const auto schema = small_schema({"case_id", "contract_value"});
    const auto c = case_text({doc("representacao", "Representação TC 1 sobre o pregão eletrônico."),
                              doc("edital", "O valor estimado da contratação é de R$ 1.234.567,00."),
                              doc("ata", "Sessão pública realizada com três licitantes.")});
    const auto corpora = case_index(c);
    llm::LlmGateway gw(testsupport::scripted(Json::array(
        {pattern({"## Document excerpt"}, "case_id: TC 1\ncontract_value: UNKNOWN"),
         pattern({"Write a search query", "- contract_value:"}, "Query: valor estimado contratação"),
         pattern({"## Passages", "1.234.567"}, "contract_value: R$ 1.234.567,00 [source 1]")})));
    const auto form = extract_basic_info(c, schema, corpora, gw);
    const auto& v = form.fields.at("contract_value");
    CHECK(v.value == "R$ 1.234.567,00");
    CHECK(v.provenance == Provenance::RagSearch);
    CHECK(v.source_doc_id == "edital");
    CHECK(form.fields.at("case_id").provenance == Provenance::FirstPages);
    CHECK(corpora.search_calls() == 1);
    check_form_invariants(form, schema);
}

TEST_CASE("crafted queries run after composed queries fail") {
    const auto schema = small_schema({"case_id", "contract_duration"});
    const auto c = case_text({doc("representacao", "Representação TC 2."),
                              doc("minuta", "Cláusula de reajuste anual pelo índice oficial."),
                              doc("termo", "A vigência contratual será de 12 meses.")});
    const auto corpora = case_index(c);
    BasicInfoOptions options;
    options.crafted_queries["contract_duration"] = "vigência contratual";
    options.crafted_queries["case_id"] = "never used, already filled";
    llm::LlmGateway gw(testsupport::scripted(Json::array(
        {pattern({"## Document excerpt"}, "case_id: TC 2\ncontract_duration: UNKNOWN"),
         pattern({"Write a search query"}, "Query: reajuste anual"),
         pattern({"## Passages", "12 meses"}, "contract_duration: 12 meses [source 1]"),
         pattern({"## Passages"}, "contract_duration: UNKNOWN")})));
    const auto form = extract_basic_info(c, schema, corpora, gw, options);
    const auto& v = form.fields.at("contract_duration");
    CHECK(v.value == "12 meses");
    CHECK(v.provenance == Provenance::CraftedQuery);
    CHECK(v.source_doc_id == "termo");
    CHECK(corpora.search_calls() == 2);
}

TEST_CASE("values may stay absent after all three phases") {
    const auto schema = small_schema({"case_id", "rapporteur"});
    const auto c = case_text({doc("main", "Representação."), doc("annex", "Relatório anexo.")});
    BasicInfoOptions options;
    options.crafted_queries["rapporteur"] = "ministro relator {field}";
    llm::LlmGateway gw(testsupport::scripted(
        Json::array({pattern({"## Document excerpt"}, "case_id: TC 3\nrapporteur: UNKNOWN"),
                     pattern({"Write a search query"}, "Query: relatório"),
                     pattern({"## Passages"}, "rapporteur: UNKNOWN")})));
    const auto form = extract_basic_info(c, schema, case_index(c), gw, options);
    CHECK(form.missing(schema) == std::vector<std::string>{"rapporteur"});
    check_form_invariants(form, schema);
}

TEST_CASE("form replies get one reprompt") {
    const auto schema = small_schema({"case_id"});
    const auto c = case_text({doc("main", "Representação.")});
    SUBCASE("recovered") {
        llm::LlmGateway gw(testsupport::scripted(Json::array(
            {pattern({"could not be parsed"}, "case_id: TC 4"), pattern({"## Document excerpt"}, "I cannot tell.")})));
        CHECK(extract_basic_info(c, schema, case_index(c), gw).fields.at("case_id").value == "TC 4");
        CHECK(gw.audit_entries().size() == 2);
    }
    SUBCASE("FormParseError") {
        llm::LlmGateway gw(testsupport::scripted(Json::array({pattern({"## Document excerpt"}, "I cannot tell.")})));
        CHECK_THROWS_WITH_AS(extract_basic_info(c, schema, case_index(c), gw), doctest::Contains("FormParseError"),
                             Error);
    }
}

TEST_CASE("preconditions") {
    const auto schema = small_schema({"case_id"});
    llm::LlmGateway gw(testsupport::scripted(Json::array()));
    const auto empty = case_text({doc("main", "  \n ")});
    const auto corpora = case_index(case_text({doc("x", "algo")}));
    CHECK_THROWS_WITH_AS(extract_basic_info(empty, schema, corpora, gw), doctest::Contains("PreconditionViolation"),
                         Error);
    auto wrong = case_text({doc("main", "texto")});
    wrong.main_doc_id = "absent";
    CHECK_THROWS_AS(extract_basic_info(wrong, schema, corpora, gw), Error);
}

TEST_CASE("extraction is deterministic under the same transcript") {
    const auto schema = small_schema({"case_id", "contract_value"});
    const auto c = case_text({doc("main", "Representação TC 5."), doc("edital", "valor estimado R$ 10,00")});
    const Json script = Json::array({pattern({"## Document excerpt"}, "case_id: TC 5\ncontract_value: UNKNOWN"),
                                     pattern({"Write a search query"}, "valor estimado"),
                                     pattern({"## Passages"}, "contract_value: R$ 10,00")});
    llm::LlmGateway a(testsupport::scripted(script)), b(testsupport::scripted(script));
    const auto fa = extract_basic_info(c, schema, case_index(c), a);
    const auto fb = extract_basic_info(c, schema, case_index(c), b);
    CHECK(fa == fb);
    CHECK(Json(fa).dump() == Json(fb).dump());
    // Without a citation the first hit is the source.
    CHECK(fa.fields.at("contract_value").source_doc_id == "edital");
    FilledForm round;
    from_json(Json(fa), round);
    CHECK(round == fa);
}

TEST_CASE("allegations and requests") {
    SUBCASE("three allegations, two requests") {
        const auto l = parse_allegations_requests("Allegations:\n1. A\n2. B\n3. C\n\nRequests:\n1. X\n2. Y\n");
        REQUIRE(l.allegations.size() == 3);
        REQUIRE(l.requests.size() == 2);
        CHECK(l.allegations[2] == EnumeratedItem{3, "C"});
        CHECK(l.requests[1] == EnumeratedItem{2, "Y"});
    }
    SUBCASE("requests before allegations") {
        const auto l = parse_allegations_requests("**Requests:**\n- suspend\n\n## Allegations\n- first\n- second\n");
        CHECK(l.requests == std::vector<EnumeratedItem>{{1, "suspend"}});
        CHECK(l.allegations == std::vector<EnumeratedItem>{{1, "first"}, {2, "second"}});
    }
    SUBCASE("continuation lines and renumbering") {
        const auto l = parse_allegations_requests("Alegações:\n3) primeira\n   continua aqui\n7) segunda\nPedidos:\n");
        CHECK(l.allegations == std::vector<EnumeratedItem>{{1, "primeira continua aqui"}, {2, "segunda"}});
        CHECK(l.requests.empty());
    }
    SUBCASE("no sections") {
        CHECK_THROWS_WITH_AS(parse_allegations_requests("no allegations found"),
                             doctest::Contains("AllegationParseError"), Error);
    }
}

TEST_CASE("allegation parser property: generated enumerations round-trip") {
    std::mt19937 rng(2024);
    const std::vector<std::string> words = {"edital", "preço", "prazo", "atestado", "contrato", "sessão", "recurso"};
    const std::vector<std::string> alleg_headers = {"Allegations:", "## Allegations", "**Alegações:**", "ALLEGATIONS"};
    const std::vector<std::string> req_headers = {"Requests:", "## Pedidos", "**Requests**", "requerimentos:"};
    for (int iter = 0; iter < 500; ++iter) {
        const auto make_items = [&](std::size_t n) {
            std::vector<std::string> items;
            for (std::size_t i = 0; i < n; ++i) {
                std::string t;
                const std::size_t len = 1 + rng() % 5;
                for (std::size_t k = 0; k < len; ++k) t += (k ? " " : "") + words[rng() % words.size()];
                items.push_back(t);
            }
            return items;
        };
        const auto render = [&](const std::string& header, const std::vector<std::string>& items) {
            std::string out = header + "\n";
            const int style = static_cast<int>(rng() % 4);
            for (std::size_t i = 0; i < items.size(); ++i) {
                switch (style) {
                case 0: out += std::to_string(i + 1) + ". "; break;
                case 1: out += std::to_string(i + 1) + ") "; break;
                case 2: out += "- "; break;
                default: out += "* "; break;
                }
                out += items[i] + "\n";
            }
            return out + (rng() % 2 ? "\n" : "");
        };
        const auto alleg = make_items(rng() % 7);
        const auto reqs = make_items(rng() % 5);
        const std::string a = render(alleg_headers[rng() % alleg_headers.size()], alleg);
        const std::string r = render(req_headers[rng() % req_headers.size()], reqs);
        const std::string reply = (rng() % 3 ? "Here is the list.\n\n" : "") + (rng() % 2 ? a + r : r + a);
        CAPTURE(reply);
        const auto parsed = parse_allegations_requests(reply);
        REQUIRE(parsed.allegations.size() == alleg.size());
        REQUIRE(parsed.requests.size() == reqs.size());
        for (std::size_t i = 0; i < alleg.size(); ++i) {
            CHECK(parsed.allegations[i] == EnumeratedItem{i + 1, alleg[i]});
        }
        for (std::size_t i = 0; i < reqs.size(); ++i) {
            CHECK(parsed.requests[i] == EnumeratedItem{i + 1, reqs[i]});
        }
    }
}

TEST_CASE("allegation extraction through the gateway") {
    const std::string main_text = "O representante alega que o edital restringe a competitividade.";
    SUBCASE("prompt carries the example, the rules and the document") {
        llm::ApproxTokenizer tok;
        const auto p = allegation_prompt(main_text, default_allegation_example(), 2000, tok);
        CHECK(p.find("## Example") != std::string::npos);
        CHECK(p.find("same order") != std::string::npos);
        CHECK(p.find("## Case main document\n\n" + main_text) != std::string::npos);
        const auto small = allegation_prompt(std::string(20000, 'x'), default_allegation_example(), 600, tok);
        CHECK(tok.count(small) <= 600);
        CHECK_THROWS_AS(allegation_prompt(main_text, default_allegation_example(), 10, tok), Error);
    }
    SUBCASE("parsed reply") {
        llm::LlmGateway gw(testsupport::scripted(Json::array(
            {pattern({"## Case main document"}, "Allegations:\n1. restrição\n2. sobrepreço\n3. prazo\nRequests:\n1. "
                                                "suspensão\n2. anulação\n")})));
        const auto l = extract_allegations_requests(main_text, gw, default_allegation_example());
        CHECK(l.allegations.size() == 3);
        CHECK(l.requests.size() == 2);
        AllegationList copy;
        from_json(Json(l), copy);
        CHECK(copy == l);
    }
    SUBCASE("one reprompt, then AllegationParseError") {
        llm::LlmGateway gw(testsupport::scripted(Json::array({pattern({"## Case main document"}, "no allegations found")})));
        CHECK_THROWS_WITH_AS(extract_allegations_requests(main_text, gw, default_allegation_example()),
                             doctest::Contains("AllegationParseError"), Error);
        CHECK(gw.audit_entries().size() == 2);
    }
    SUBCASE("empty main text") {
        llm::LlmGateway gw(testsupport::scripted(Json::array()));
        CHECK_THROWS_AS(extract_allegations_requests(" ", gw, default_allegation_example()), Error);
    }
}
