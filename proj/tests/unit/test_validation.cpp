#include "generators.hpp"
#include "support.hpp"

#include "casework/error.hpp"
#include "casework/validation.hpp"

#include <doctest.h>

#include <random>

using gen::random_record;

using namespace casework;
using namespace casework::validation;
using testsupport::pattern;

namespace {

const auto kConfig = ValidationConfig::defaults();

const std::string kPortuguese = "# Instrução TC-77\n\n"
                                "## 1. Informações Básicas\n\ncase_id: TC-77\nplaintiff_name: Empresa X\n\n"
                                "## 2. Alegações e Pedidos\n\nAlegações:\n1. Restrição.\nPedidos:\n1. Suspensão.\n\n"
                                "## 3. Exame de Admissibilidade\n\n"
                                "- **Legitimidade**: Sim (atendido)\n- Competência: Sim\n- Indícios: Parcial\n"
                                "- Interesse Público: Não se aplica\n- Redação Clara: Não\n\n"
                                "## 4. Análise da Medida Cautelar\n\n"
                                "Perigo da demora: Afastado\nPerigo da demora reverso: Não analisado\n"
                                "Fumaça do bom direito: Configurado\n\n"
                                "## 5. Proposta de Encaminhamento\n\nConhecer da representação.";

} // namespace

TEST_CASE("section isolation returns the exact spans") {
    const std::vector<std::string> bodies = {"\nA: 1\n\n", "\nAllegations:\nx\n", "\nLegitimacy: Yes\n",
                                             "\nFumus: Inconclusive\n", "\ntail without newline"};
    std::string text = "# Instruction: c\n";
    for (std::size_t i = 0; i < 5; ++i) {
        text += "## " + std::to_string(i + 1) + ". " + kConfig.headers.at(recommendations::kAllSections[i]).front() +
                "\n" + bodies[i];
    }
    const StandardInstruction doc{"c", text};
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(isolate_section(doc, recommendations::kAllSections[i], kConfig) == bodies[i]);
    }

    // Spans are disjoint and, with the header lines, tile the document after the title.
    const auto spans = locate_sections(text, kConfig);
    REQUIRE(spans.size() == 5);
    std::size_t cursor = spans.begin()->second.header_begin;
    CHECK(text.substr(0, cursor) == "# Instruction: c\n");
    for (const auto& [id, s] : spans) {
        CHECK(s.header_begin == cursor);
        CHECK(s.header_begin < s.body_begin);
        CHECK(s.body_begin <= s.body_end);
        cursor = s.body_end;
    }
    CHECK(cursor == text.size());
}

TEST_CASE("section isolation errors") {
    const StandardInstruction missing{"m", "## Basic Information\nx\n## Claims and Requests\ny\n"};
    CHECK_THROWS_WITH_AS(isolate_section(missing, SectionId::Recommendations, kConfig),
                         doctest::Contains("SectionNotFound"), Error);
    const StandardInstruction twice{"t", "## Basic Information\nx\n## Basic Information\ny\n"};
    CHECK_THROWS_WITH_AS(isolate_section(twice, SectionId::BasicInfo, kConfig),
                         doctest::Contains("MalformedInstruction"), Error);
    const StandardInstruction swapped{"s", "## Recommendations\nx\n## Basic Information\ny\n"};
    CHECK_THROWS_AS(isolate_section(swapped, SectionId::BasicInfo, kConfig), Error);
    // Header matching ignores numbering, emphasis, a trailing colon and case.
    const StandardInstruction styled{"y", "**3) ADMISSIBILITY EXAMINATION:**\nbody\n"};
    CHECK(isolate_section(styled, SectionId::Admissibility, kConfig) == "body\n");
}

TEST_CASE("labels") {
    std::mt19937 rng(1);
    auto r = random_record(rng, 0);
    r.admissibility[AdmissibilityCriterion::Legitimacy] = AdmissibilityValue::Yes;
    r.precautionary[PrecautionaryCriterion::Periculum] = PrecautionaryValue::Dismissed;
    const auto doc = synthesize_instruction(r, kConfig);
    CHECK(doc.full_text.find("Legitimacy: Yes (met)") != std::string::npos);
    CHECK(doc.full_text.find("Periculum in mora: Dismissed (rejected)") != std::string::npos);
    const auto labels = extract_labels(doc, kConfig);
    CHECK(labels.admissibility.at(AdmissibilityCriterion::Legitimacy) == AdmissibilityValue::Yes);
    CHECK(labels.precautionary.at(PrecautionaryCriterion::Periculum) == PrecautionaryValue::Dismissed);

    SUBCASE("Portuguese forms, longest token first") {
        const auto pt = extract_labels({"TC-77", kPortuguese}, kConfig);
        CHECK(pt.admissibility.at(AdmissibilityCriterion::Legitimacy) == AdmissibilityValue::Yes);
        CHECK(pt.admissibility.at(AdmissibilityCriterion::ExistenceOfEvidence) == AdmissibilityValue::Partial);
        CHECK(pt.admissibility.at(AdmissibilityCriterion::PublicInterest) == AdmissibilityValue::NotApplicable);
        CHECK(pt.admissibility.at(AdmissibilityCriterion::ClearWriting) == AdmissibilityValue::No);
        CHECK(pt.precautionary.at(PrecautionaryCriterion::Periculum) == PrecautionaryValue::Dismissed);
        CHECK(pt.precautionary.at(PrecautionaryCriterion::ReversePericulum) == PrecautionaryValue::NotAnalyzed);
        CHECK(pt.precautionary.at(PrecautionaryCriterion::Fumus) == PrecautionaryValue::Configured);
    }
    SUBCASE("unknown token names the criterion") {
        StandardInstruction bad = doc;
        const auto pos = bad.full_text.find("Legitimacy: Yes (met)");
        bad.full_text.replace(pos, std::string("Legitimacy: Yes (met)").size(), "Legitimacy: Maybe");
        CHECK_THROWS_WITH_AS(extract_labels(bad, kConfig), doctest::Contains("Legitimacy"), Error);
        CHECK_THROWS_WITH_AS(extract_labels(bad, kConfig), doctest::Contains("LabelParseError"), Error);
    }
    SUBCASE("a token must end at a word boundary") {
        StandardInstruction bad = doc;
        const auto pos = bad.full_text.find("Legitimacy: Yes (met)");
        bad.full_text.replace(pos, std::string("Legitimacy: Yes (met)").size(), "Legitimacy: Yesterday");
        CHECK_THROWS_AS(extract_labels(bad, kConfig), Error);
    }
    SUBCASE("missing criterion line") {
        StandardInstruction bad = doc;
        const auto pos = bad.full_text.find("Fumus boni iuris:");
        bad.full_text.replace(pos, std::string("Fumus boni iuris").size(), "Something else");
        CHECK_THROWS_WITH_AS(extract_labels(bad, kConfig), doctest::Contains("Fumus"), Error);
    }
}

TEST_CASE("round trip: 100 generated instructions parse back to equal records") {
    std::mt19937 rng(8);
    const auto extractor = line_basic_info_extractor(extraction::FormSchema::default_schema());
    int failures = 0;
    for (std::size_t i = 0; i < 100; ++i) {
        const auto record = random_record(rng, i);
        const auto doc = synthesize_instruction(record, kConfig);
        CAPTURE(doc.full_text);
        ValidationRecord parsed;
        try {
            parsed = parse_instruction(doc, extractor, kConfig);
        } catch (const Error& e) {
            FAIL_CHECK(e.what());
            ++failures;
            continue;
        }
        if (!(parsed == record)) ++failures;
        CHECK(parsed.basic_info == record.basic_info);
        CHECK(parsed.claims_text == record.claims_text);
        CHECK(parsed.requests_text == record.requests_text);
        CHECK(parsed.admissibility == record.admissibility);
        CHECK(parsed.precautionary == record.precautionary);
        CHECK(parsed.recommendations_text == record.recommendations_text);
        ValidationRecord via_json;
        from_json(Json(parsed), via_json);
        CHECK(via_json == parsed);
    }
    CHECK(failures == 0);
}

TEST_CASE("validation table") {
    std::mt19937 rng(5);
    const auto extractor = line_basic_info_extractor(extraction::FormSchema::default_schema());
    std::vector<StandardInstruction> docs;
    for (std::size_t i = 0; i < 3; ++i) docs.push_back(synthesize_instruction(random_record(rng, i), kConfig));
    CHECK(build_validation_table(docs, extractor, kConfig).records.size() == 3);

    docs[1].full_text.erase(docs[1].full_text.find("## 5."));
    const auto table = build_validation_table(docs, extractor, kConfig);
    CHECK(table.records.size() == 2);
    REQUIRE(table.errors.size() == 1);
    CHECK(table.errors[0].case_id == docs[1].case_id);
    CHECK(table.errors[0].kind == "SectionNotFound");

    const auto empty = build_validation_table({}, extractor, kConfig);
    CHECK(empty.records.empty());
    CHECK(empty.warnings.size() == 1);

    const auto jsonl = to_jsonl(table.records);
    CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 2);
    const auto csv = labels_csv(table.records);
    CHECK(csv.rfind("case_id,Legitimacy,Competency,ExistenceOfEvidence,PublicInterest,ClearWriting,Periculum,"
                    "ReversePericulum,Fumus\n",
                    0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    ValidationRecord quoted;
    quoted.case_id = "a,\"b\"";
    CHECK(labels_csv({quoted}).find("\"a,\"\"b\"\"\",,,,,,,,\n") != std::string::npos);
}

TEST_CASE("loading a directory of instructions") {
    testsupport::TempDir dir;
    write_file_atomic(dir.path() / "b.md", kPortuguese);
    write_file_atomic(dir.path() / "a.txt", "x");
    write_file_atomic(dir.path() / "ignored.json", "{}");
    const auto docs = load_instructions(dir.path());
    REQUIRE(docs.size() == 2);
    CHECK(docs[0].case_id == "a");
    CHECK(docs[1].case_id == "b");
    CHECK_THROWS_AS(load_instructions(dir.path() / "absent"), Error);

    const auto r = parse_instruction(docs[1], line_basic_info_extractor(extraction::FormSchema::default_schema()),
                                     kConfig);
    CHECK(r.basic_info.at("plaintiff_name") == "Empresa X");
    CHECK(r.claims_text == "1. Restrição.");
    CHECK(r.requests_text == "1. Suspensão.");
    CHECK(r.recommendations_text == "Conhecer da representação.");
}

TEST_CASE("basic info through the model extractor") {
    llm::LlmGateway gw(testsupport::scripted(Json::array(
        {pattern({"## Document excerpt", "Empresa X"}, "case_id: TC-77\nplaintiff_name: Empresa X\ncase_type: UNKNOWN")})));
    extraction::FormSchema schema;
    schema.fields = {{"case_id", "", true}, {"plaintiff_name", "", false}, {"case_type", "", false}};
    const auto r = parse_instruction({"TC-77", kPortuguese}, llm_basic_info_extractor(schema, gw), kConfig);
    CHECK(r.basic_info == std::map<std::string, std::string>{{"case_id", "TC-77"}, {"plaintiff_name", "Empresa X"}});
}

TEST_CASE("config overrides") {
    const auto c = ValidationConfig::from_json(Json{{"headers", {{"Recommendations", {"Encaminhamento"}}}}});
    CHECK(c.headers.at(SectionId::Recommendations) == std::vector<std::string>{"Encaminhamento"});
    CHECK(c.headers.at(SectionId::BasicInfo) == kConfig.headers.at(SectionId::BasicInfo));
    for (const auto p : kPrecautionaryCriteria) CHECK(precautionary_criterion_from_string(to_string(p)) == p);
    CHECK_THROWS_AS(precautionary_value_from_string("Maybe"), Error);
}
