#include "support.hpp"

#include "casework/error.hpp"
#include "casework/precautionary.hpp"

#include <doctest.h>

#include <random>

using namespace casework;
using namespace casework::precautionary;
using testsupport::pattern;

namespace {

ingest::ExtractedDocument doc(std::string id, std::string text) {
    ingest::ExtractedDocument d;
    d.doc_id = std::move(id);
    d.text = std::move(text);
    d.total_char_count = d.text.size();
    d.page_count = 1;
    return d;
}

std::vector<ingest::ExtractedDocument> docs_with_drafts(std::size_t n, std::size_t drafts) {
    std::vector<ingest::ExtractedDocument> out;
    for (std::size_t i = 0; i < n; ++i) {
        const bool draft = i < drafts;
        out.push_back(doc("d" + std::to_string(i + 1),
                          draft ? (i % 2 ? "Anexo: MINUTA DE CONTRATO de prestação" : "segue a Minuta de Contrato")
                                : "Documento comum número " + std::to_string(i + 1)));
    }
    return out;
}

retrieval::CorpusSet index_docs(std::span<const ingest::ExtractedDocument> docs) {
    std::vector<retrieval::IndexedPassage> passages;
    for (const auto& d : docs) {
        auto chunks = retrieval::chunk_document(CorpusId::CaseDocuments, d.doc_id, d.text);
        passages.insert(passages.end(), chunks.begin(), chunks.end());
    }
    retrieval::CorpusSet set;
    set.add(std::make_shared<const retrieval::Bm25Index>(retrieval::Bm25Index::build(passages)));
    return set;
}

retrieval::CorpusSet external_corpora() {
    const auto build = [](CorpusId c, std::vector<std::pair<std::string, std::string>> docs) {
        std::vector<retrieval::IndexedPassage> passages;
        for (const auto& [id, text] : docs) {
            auto chunks = retrieval::chunk_document(c, id, text);
            passages.insert(passages.end(), chunks.begin(), chunks.end());
        }
        return std::make_shared<const retrieval::Bm25Index>(retrieval::Bm25Index::build(passages));
    };
    retrieval::CorpusSet set;
    set.add(build(CorpusId::StatutesFederalLaw,
                  {{"lei-14133-art9", "É vedado admitir cláusulas que restrinjam o caráter competitivo."},
                   {"lei-14133-art67", "A exigência de atestados será restrita às parcelas de maior relevância."}}));
    set.add(build(CorpusId::Jurisprudence,
                  {{"acordao-1", "Exigência de atestado com quantitativo mínimo excessivo restringe a competição."}}));
    return set;
}

const std::string kActiveMarker = "Do the passages below show that a contract";
const std::string kDelayMarker = "Does the material below report a delay";

} // namespace

TEST_CASE("periculum truth table") {
    CHECK(decide_periculum(true, false) == PericulumVerdict::Rejected);
    CHECK(decide_periculum(true, true) == PericulumVerdict::Rejected);
    CHECK(decide_periculum(false, true) == PericulumVerdict::Rejected);
    CHECK(decide_periculum(false, false) == PericulumVerdict::Accepted);
    for (const auto v : {PericulumVerdict::Accepted, PericulumVerdict::Rejected}) {
        CHECK(periculum_verdict_from_string(to_string(v)) == v);
    }
}

TEST_CASE("draft-contract flagging fixtures") {
    SUBCASE("six documents, two drafts: four considered") {
        const auto r = flag_draft_contract_docs(docs_with_drafts(6, 2));
        CHECK(r.flagged == std::vector<std::string>{"d1", "d2"});
        CHECK(r.considered.size() == 4);
    }
    SUBCASE("four documents, one draft: all considered") {
        const auto r = flag_draft_contract_docs(docs_with_drafts(4, 1));
        CHECK(r.flagged.empty());
        CHECK(r.considered.size() == 4);
    }
    SUBCASE("five documents, no draft: all considered") {
        const auto r = flag_draft_contract_docs(docs_with_drafts(5, 0));
        CHECK(r.flagged.empty());
        CHECK(r.considered.size() == 5);
    }
    SUBCASE("five documents is already enough to exclude") {
        const auto r = flag_draft_contract_docs(docs_with_drafts(5, 1));
        CHECK(r.flagged == std::vector<std::string>{"d1"});
        CHECK(r.considered.size() == 4);
    }
    SUBCASE("the phrase must match exactly") {
        auto docs = docs_with_drafts(5, 0);
        docs[0].text = "minuta do contrato";
        docs[1].text = "minuta  de contrato";
        CHECK(flag_draft_contract_docs(docs).flagged.empty());
    }
}

TEST_CASE("yes/no replies") {
    const auto r = parse_yes_no_reply("ANSWER: Yes.\nDOCUMENTS: ata, edital , none");
    REQUIRE(r);
    CHECK(r->yes);
    CHECK(r->doc_ids == std::vector<std::string>{"ata", "edital"});
    CHECK(!parse_yes_no_reply("ANSWER: perhaps"));
    CHECK(!parse_yes_no_reply("I am not sure"));
    CHECK(!parse_yes_no_reply("answer: **no**")->yes);
}

TEST_CASE("active contract: keyword OR model") {
    const std::vector<ingest::ExtractedDocument> signed_docs = {
        doc("ata", "Sessão encerrada. O contrato assinado em 10/05/2024 com a empresa vencedora."),
        doc("edital", "Edital do pregão eletrônico.")};
    const std::vector<ingest::ExtractedDocument> plain_docs = {doc("ata", "Sessão pública do pregão, vigente edital."),
                                                               doc("edital", "Edital do pregão eletrônico.")};
    SUBCASE("keyword and model yes") {
        llm::LlmGateway gw(testsupport::scripted(Json::array({pattern({kActiveMarker}, "ANSWER: yes\nDOCUMENTS: ata")})));
        const auto s = detect_active_contract(signed_docs, index_docs(signed_docs), gw);
        CHECK(s.present);
        CHECK(s.evidence_doc_ids == std::vector<std::string>{"ata"});
    }
    SUBCASE("no keyword, model no") {
        llm::LlmGateway gw(testsupport::scripted(Json::array({pattern({kActiveMarker}, "ANSWER: no")})));
        const auto s = detect_active_contract(plain_docs, index_docs(plain_docs), gw);
        CHECK_FALSE(s.present);
        CHECK(s.evidence_doc_ids.empty());
    }
    SUBCASE("keyword, model no: still present") {
        llm::LlmGateway gw(testsupport::scripted(Json::array({pattern({kActiveMarker}, "ANSWER: no")})));
        const auto s = detect_active_contract(signed_docs, index_docs(signed_docs), gw);
        CHECK(s.present);
        CHECK(s.evidence_doc_ids == std::vector<std::string>{"ata"});
    }
    SUBCASE("no keyword, model yes") {
        llm::LlmGateway gw(
            testsupport::scripted(Json::array({pattern({kActiveMarker}, "ANSWER: yes\nDOCUMENTS: edital")})));
        const auto s = detect_active_contract(plain_docs, index_docs(plain_docs), gw);
        CHECK(s.present);
        CHECK(s.evidence_doc_ids == std::vector<std::string>{"edital"});
    }
    SUBCASE("unparseable model reply is no signal, flagged") {
        llm::LlmGateway gw(testsupport::scripted(Json::array({pattern({kActiveMarker}, "hard to say")})));
        const auto s = detect_active_contract(plain_docs, index_docs(plain_docs), gw);
        CHECK_FALSE(s.present);
        CHECK(s.flags == std::vector<std::string>{"active_contract_unparsed"});
    }
    SUBCASE("empty input") {
        llm::LlmGateway gw(testsupport::scripted(Json::array()));
        CHECK_THROWS_AS(detect_active_contract({}, index_docs(plain_docs), gw), Error);
    }
}

TEST_CASE("delay events are judged by the model only") {
    std::vector<ingest::ExtractedDocument> docs;
    for (int i = 1; i <= 8; ++i) docs.push_back(doc("d" + std::to_string(i), "Texto do documento " + std::to_string(i)));
    docs[6].text = "O certame foi suspenso por decisão cautelar.";
    SUBCASE("suspension reported in document 7") {
        llm::LlmGateway gw(testsupport::scripted(Json::array(
            {pattern({kDelayMarker, "### Document d7"}, "ANSWER: yes\nDOCUMENTS: d7"), pattern({kDelayMarker}, "ANSWER: no")})));
        const auto s = detect_delay_events(docs, gw);
        CHECK(s.present);
        CHECK(s.evidence_doc_ids == std::vector<std::string>{"d7"});
        CHECK(gw.audit_entries().size() == 8);
    }
    SUBCASE("keywords alone never count") {
        llm::LlmGateway gw(testsupport::scripted(Json::array({pattern({kDelayMarker}, "ANSWER: no")})));
        CHECK_FALSE(detect_delay_events(docs, gw).present);
    }
    SUBCASE("unparseable twice: absent and flagged") {
        llm::LlmGateway gw(testsupport::scripted(Json::array(
            {pattern({kDelayMarker, "### Document d3"}, "cannot tell"), pattern({kDelayMarker}, "ANSWER: no")})));
        const auto s = detect_delay_events(docs, gw);
        CHECK_FALSE(s.present);
        CHECK(s.flags == std::vector<std::string>{"delay_unparsed:d3"});
        CHECK(gw.audit_entries().size() == 9);
    }
    SUBCASE("documents beyond the per-document budget go in batches") {
        DelayOptions o;
        o.max_document_calls = 2;
        o.batch_size = 5;
        llm::LlmGateway gw(testsupport::scripted(Json::array(
            {pattern({kDelayMarker, "### Document d7"}, "ANSWER: yes\nDOCUMENTS: d7"), pattern({kDelayMarker}, "ANSWER: no")})));
        const auto s = detect_delay_events(docs, gw, o);
        CHECK(gw.audit_entries().size() == 2 + 2); // d1, d2, then d3..d7 and d8
        CHECK(s.evidence_doc_ids == std::vector<std::string>{"d7"});
    }
}

TEST_CASE("verdict paragraph") {
    PericulumFinding rejected;
    rejected.active_contract = {true, {"ata"}, {}};
    rejected.verdict = PericulumVerdict::Rejected;
    SUBCASE("consistent draft") {
        llm::LlmGateway gw(testsupport::scripted(
            Json::array({pattern({"## Decision rules"}, "The request is rejected because a contract is in force (ata).")})));
        CHECK(draft_periculum_text(rejected, gw).find("rejected") != std::string::npos);
        CHECK(gw.audit_entries().size() == 1);
    }
    SUBCASE("contradicting draft is regenerated") {
        llm::LlmGateway gw(testsupport::scripted(
            Json::array({pattern({"did not state the verdict"}, "The request is rejected (ata)."),
                         pattern({"## Decision rules"}, "The request is accepted.")})));
        CHECK(draft_periculum_text(rejected, gw) == "The request is rejected (ata).");
        CHECK(gw.audit_entries().size() == 2);
    }
    SUBCASE("contradicting twice") {
        llm::LlmGateway gw(testsupport::scripted(Json::array({pattern({"## Decision rules"}, "The request is accepted.")})));
        CHECK_THROWS_WITH_AS(draft_periculum_text(rejected, gw), doctest::Contains("DraftMismatch"), Error);
    }
    SUBCASE("accepted finding tells the model no contract is active") {
        PericulumFinding accepted;
        llm::LlmGateway gw(testsupport::scripted(Json::array(
            {pattern({"Active contract: no", "Verdict: Accepted"},
                     "No contract has been signed and nothing halted the procurement, so the danger in delay is "
                     "accepted.")})));
        const auto text = draft_periculum_text(accepted, gw);
        CHECK(text.find("No contract") != std::string::npos);
    }
}

TEST_CASE("flagged drafts never reach the evidence, and the model never overrides the rule") {
    // d1 is a draft that also contains the contract keyword.
    auto docs = docs_with_drafts(6, 1);
    docs[0].text += " contrato assinado";
    const auto corpora = index_docs(docs);
    std::mt19937 rng(3);
    for (int iter = 0; iter < 40; ++iter) {
        const bool active_yes = rng() % 2;
        const std::string delay_doc = "d" + std::to_string(1 + rng() % 6);
        const bool delay_yes = rng() % 2;
        const Json script = Json::array(
            {pattern({kActiveMarker}, active_yes ? "ANSWER: yes\nDOCUMENTS: d1, d3" : "ANSWER: no"),
             pattern({kDelayMarker, "### Document " + delay_doc + "\n"}, delay_yes ? "ANSWER: yes" : "ANSWER: no"),
             pattern({kDelayMarker}, "ANSWER: no"),
             pattern({"## Decision rules", "Verdict: Rejected"}, "The request is rejected."),
             pattern({"## Decision rules", "Verdict: Accepted"}, "The danger in delay is accepted.")});
        llm::LlmGateway gw(testsupport::scripted(script));
        const auto f = analyze_periculum(docs, corpora, gw);
        CAPTURE(iter);
        CHECK(f.draft_contract_doc_ids == std::vector<std::string>{"d1"});
        for (const auto* s : {&f.active_contract, &f.delay_event}) {
            CHECK(std::find(s->evidence_doc_ids.begin(), s->evidence_doc_ids.end(), "d1") == s->evidence_doc_ids.end());
            CHECK(s->present == !s->evidence_doc_ids.empty());
        }
        CHECK(f.verdict == decide_periculum(f.active_contract.present, f.delay_event.present));
        CHECK(f.delay_event.present == (delay_yes && delay_doc != "d1"));
        PericulumFinding copy;
        from_json(Json(f), copy);
        CHECK(copy == f);
    }
}

TEST_CASE("fumus labels") {
    CHECK(parse_fumus_label("grounded in law") == FumusLabel::GroundedInLaw);
    CHECK(parse_fumus_label("Not grounded: the statute allows it") == FumusLabel::NotGrounded);
    CHECK(parse_fumus_label("**Inconclusive**") == FumusLabel::Inconclusive);
    CHECK(parse_fumus_label("fundamentada") == FumusLabel::GroundedInLaw);
    CHECK(parse_fumus_label("não fundamentada") == FumusLabel::NotGrounded);
    CHECK(!parse_fumus_label("perhaps"));
    for (const auto l : {FumusLabel::GroundedInLaw, FumusLabel::NotGrounded, FumusLabel::Inconclusive}) {
        CHECK(fumus_label_from_string(to_string(l)) == l);
    }
}

TEST_CASE("fumus classification per allegation") {
    const auto corpora = external_corpora();
    const extraction::EnumeratedItem allegation{1, "O edital exige atestado com quantitativo excessivo."};
    const auto script = [](std::string conclusion, std::string cot) {
        return testsupport::scripted(Json::array(
            {pattern({"## Question", "Allegation 1:"}, cot),
             pattern({"Allegation 1:", "Step 1 of"}, "Thought: statutes\nAction: search[statutes_federal_law] atestados"),
             pattern({"Allegation 1:", "Step 2 of"},
                     "Thought: precedents\nAction: search[jurisprudence] atestado quantitativo excessivo"),
             pattern({"Allegation 1:", "Step 3 of"}, "Thought: done\nAction: conclude " + conclusion)}));
    };
    SUBCASE("evidence matching the statute") {
        llm::LlmGateway gw(script("grounded in law", "Art. 67 limits certificates.\nANSWER: grounded in law"));
        const auto c = classify_allegation_fumus(allegation, corpora, gw);
        CHECK(c.label == FumusLabel::GroundedInLaw);
        CHECK(c.allegation_index == 1);
        CHECK(c.rationale == "Art. 67 limits certificates.");
        bool statute = false, precedent = false;
        for (const auto& cit : c.citations) {
            statute = statute || cit.corpus == CorpusId::StatutesFederalLaw;
            precedent = precedent || cit.corpus == CorpusId::Jurisprudence;
        }
        CHECK(statute);
        CHECK(precedent);
    }
    SUBCASE("evidence contradicting the claim") {
        llm::LlmGateway gw(script("not grounded", "The requirement is lawful.\nANSWER: not grounded"));
        CHECK(classify_allegation_fumus(allegation, corpora, gw).label == FumusLabel::NotGrounded);
    }
    SUBCASE("budget exhaustion") {
        llm::LlmGateway gw(testsupport::scripted(
            Json::array({pattern({"## Task"}, "Thought: more\nAction: search[jurisprudence] xyzzy inexistente")})));
        const auto c = classify_allegation_fumus(allegation, corpora, gw);
        CHECK(c.label == FumusLabel::Inconclusive);
        CHECK(c.flags == std::vector<std::string>{"budget_exhausted"});
    }
    SUBCASE("a label without any search is downgraded") {
        llm::LlmGateway gw(testsupport::scripted(Json::array({pattern({"## Task"}, "Thought: sure\nAction: conclude grounded")})));
        const auto c = classify_allegation_fumus(allegation, corpora, gw);
        CHECK(c.label == FumusLabel::Inconclusive);
        CHECK(c.flags == std::vector<std::string>{"concluded_without_search"});
    }
    SUBCASE("preconditions") {
        llm::LlmGateway gw(testsupport::scripted(Json::array()));
        CHECK_THROWS_AS(classify_allegation_fumus({1, " "}, corpora, gw), Error);
        CHECK_THROWS_AS(classify_allegation_fumus(allegation, retrieval::CorpusSet{}, gw), Error);
    }
}

TEST_CASE("fumus report has one classification per allegation") {
    const auto corpora = external_corpora();
    extraction::AllegationList list;
    for (std::size_t i = 1; i <= 4; ++i) list.allegations.push_back({i, "Alegação número " + std::to_string(i)});
    // Allegation 3 is unscripted and fails; the others conclude inconclusive after a search.
    Json patterns = Json::array({pattern({"## Question"}, "Nothing decisive.\nANSWER: inconclusive")});
    for (const std::size_t i : {1, 2, 4}) {
        const std::string a = "Allegation " + std::to_string(i) + ":";
        patterns.push_back(pattern({a, "Step 1 of"}, "Thought: t\nAction: search[statutes_federal_law] cláusulas"));
        patterns.push_back(pattern({a, "Step 2 of"}, "Thought: t\nAction: conclude inconclusive"));
    }
    llm::LlmGateway gw(testsupport::scripted(patterns));
    const auto report = classify_fumus(list, corpora, gw);
    REQUIRE(report.classifications.size() == list.allegations.size());
    for (std::size_t i = 0; i < 4; ++i) CHECK(report.classifications[i].allegation_index == i + 1);
    CHECK(report.classifications[2].flags == std::vector<std::string>{"failed:UnscriptedRequest"});
    CHECK(report.summary == "Of the 4 allegations examined, 0 were found grounded in law, 0 not grounded and 4 "
                            "inconclusive.");
    FumusReport copy;
    from_json(Json(report), copy);
    CHECK(copy == report);
    CHECK(classify_fumus({}, corpora, gw).classifications.empty());
}
