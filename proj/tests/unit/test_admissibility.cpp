#include "support.hpp"

#include "casework/admissibility.hpp"
#include "casework/error.hpp"

#include <doctest.h>

#include <set>

using namespace casework;
using namespace casework::admissibility;
using testsupport::pattern;

namespace {

std::shared_ptr<const retrieval::Bm25Index> index_of(CorpusId corpus,
                                                      std::vector<std::pair<std::string, std::string>> docs) {
    std::vector<retrieval::IndexedPassage> passages;
    for (const auto& [id, text] : docs) {
        auto chunks = retrieval::chunk_document(corpus, id, text);
        passages.insert(passages.end(), chunks.begin(), chunks.end());
    }
    return std::make_shared<const retrieval::Bm25Index>(retrieval::Bm25Index::build(passages));
}

std::vector<std::shared_ptr<const retrieval::Bm25Index>> all_indexes() {
    return {index_of(CorpusId::CaseDocuments, {{"representacao", "A empresa licitante apresenta representação com "
                                                                 "documentos que comprovam a irregularidade."}}),
            index_of(CorpusId::Jurisprudence, {{"acordao-1", "O tribunal conheceu da representação de licitante."}}),
            index_of(CorpusId::StatutesFederalLaw,
                     {{"lei-14133-art170", "Qualquer licitante poderá representar ao tribunal de contas."}}),
            index_of(CorpusId::InternalCodes,
                     {{"ritcu-art237", "Têm legitimidade para representar ao tribunal os licitantes."},
                      {"ritcu-art235", "A representação deve ser redigida em linguagem clara e objetiva."}})};
}

retrieval::CorpusSet corpora_in(const std::vector<std::shared_ptr<const retrieval::Bm25Index>>& indexes) {
    retrieval::CorpusSet set;
    for (const auto& i : indexes) set.add(i);
    return set;
}

const CaseContext kContext{"TC-1", "A empresa X, licitante no pregão 7/2024, representa contra o edital."};

std::string task_marker(Criterion c) { return "criterion \"" + std::string(to_string(c)) + "\""; }

// Per criterion: search the internal codes, then conclude with `answer`.
Json script_for(const std::map<Criterion, std::string>& answers) {
    Json patterns = Json::array();
    for (const auto& [c, answer] : answers) {
        patterns.push_back(pattern({"## Question", criterion_question(c)},
                                   "Rationale for " + std::string(to_string(c)) + ".\n\nANSWER: " + answer));
    }
    for (const auto& [c, answer] : answers) {
        patterns.push_back(pattern({task_marker(c), "Step 1 of"},
                                   "Thought: check the bylaws\nAction: search[internal_codes] legitimidade licitantes"));
        patterns.push_back(pattern({task_marker(c), "Step 2 of"}, "Thought: enough\nAction: conclude " + answer));
    }
    return patterns;
}

std::set<Criterion> criteria_of(const AdmissibilityReport& r) {
    std::set<Criterion> out;
    for (const auto& v : r.verdicts) out.insert(v.criterion);
    return out;
}

CriterionVerdict labeled(Label l) {
    CriterionVerdict v;
    v.label = l;
    return v;
}

} // namespace

TEST_CASE("names and labels") {
    CHECK(kAllCriteria.size() == 5);
    for (const auto c : kAllCriteria) CHECK(criterion_from_string(to_string(c)) == c);
    for (const auto l : {Label::Yes, Label::No, Label::Partial, Label::NotApplicable}) {
        CHECK(label_from_string(to_string(l)) == l);
    }
    CHECK(parse_label("yes, the plaintiff is a bidder") == Label::Yes);
    CHECK(parse_label("No.") == Label::No);
    CHECK(parse_label("partially met") == Label::Partial);
    CHECK(parse_label("Sim") == Label::Yes);
    CHECK(parse_label("não") == Label::No);
    CHECK(parse_label("not applicable") == Label::NotApplicable);
    CHECK(!parse_label("maybe"));
    CHECK(!parse_label("nothing to add")); // "no" must be a whole word
}

TEST_CASE("legitimacy confirmed by the bylaws is Yes, with citations from the searched corpus") {
    const auto corpora = corpora_in(all_indexes());
    llm::LlmGateway gw(testsupport::scripted(script_for({{Criterion::Legitimacy, "yes"}})));
    const auto v = examine_criterion(Criterion::Legitimacy, kContext, corpora, gw);
    CHECK(v.label == Label::Yes);
    CHECK(v.rationale == "Rationale for Legitimacy.");
    CHECK(v.searches == 1);
    REQUIRE(!v.citations.empty());
    for (const auto& c : v.citations) {
        CHECK(c.corpus == CorpusId::InternalCodes);
        CHECK(corpora.index(c.corpus).find(c.passage_id) != nullptr);
    }
    CHECK(v.flags.empty());
}

TEST_CASE("legitimacy denied is No") {
    const auto corpora = corpora_in(all_indexes());
    llm::LlmGateway gw(testsupport::scripted(script_for({{Criterion::Legitimacy, "no"}})));
    const auto v = examine_criterion(Criterion::Legitimacy, kContext, corpora, gw);
    CHECK(v.label == Label::No);
    CHECK(!v.citations.empty());
}

TEST_CASE("a search of the federal statutes is cited with that corpus") {
    const auto corpora = corpora_in(all_indexes());
    llm::LlmGateway gw(testsupport::scripted(Json::array(
        {pattern({"## Question"}, "Article 170 lets any bidder file.\nANSWER: yes"),
         pattern({"Step 1 of"}, "Thought: t\nAction: search[statutes_federal_law] licitante representar"),
         pattern({"Step 2 of"}, "Thought: t\nAction: conclude yes")})));
    const auto v = examine_criterion(Criterion::Legitimacy, kContext, corpora, gw);
    REQUIRE(v.citations.size() == 1);
    CHECK(v.citations[0] == Citation{CorpusId::StatutesFederalLaw, "lei-14133-art170", "lei-14133-art170#0000"});
}

TEST_CASE("budget exhaustion yields a flagged NotApplicable") {
    const auto corpora = corpora_in(all_indexes());
    llm::LlmGateway gw(testsupport::scripted(
        Json::array({pattern({"## Task"}, "Thought: more\nAction: search[jurisprudence] representação")})));
    ExamineOptions o;
    o.max_steps = 3;
    const auto v = examine_criterion(Criterion::Competency, kContext, corpora, gw, o);
    CHECK(v.label == Label::NotApplicable);
    CHECK(v.flags == std::vector<std::string>{"budget_exhausted"});
    CHECK(v.rationale.find("stopped after 3 searches") != std::string::npos);
    CHECK(gw.audit_entries().size() == 3); // no reasoning call
}

TEST_CASE("a conclusion without retrieval falls back to one search") {
    SUBCASE("fallback corpus present") {
        const auto corpora = corpora_in(all_indexes());
        llm::LlmGateway gw(testsupport::scripted(Json::array(
            {pattern({"## Question", "clear and objective"}, "The filing is readable.\nANSWER: partial"),
             pattern({"## Task"}, "Thought: obvious\nAction: conclude partially")})));
        const auto v = examine_criterion(Criterion::ClearWriting, kContext, corpora, gw);
        CHECK(v.label == Label::Partial);
        CHECK(v.searches == 0);
        REQUIRE(!v.citations.empty());
        CHECK(v.citations.front().doc_id == "ritcu-art235");
    }
    SUBCASE("nothing to search") {
        const retrieval::CorpusSet empty;
        llm::LlmGateway gw(testsupport::scripted(Json::array({pattern({"## Task"}, "Thought: t\nAction: conclude yes")})));
        const auto v = examine_criterion(Criterion::ClearWriting, kContext, empty, gw);
        CHECK(v.label == Label::NotApplicable);
        CHECK(v.flags == std::vector<std::string>{"no_evidence"});
        CHECK(!v.rationale.empty());
    }
}

TEST_CASE("label falls back to the reasoning answer") {
    const auto corpora = corpora_in(all_indexes());
    llm::LlmGateway gw(testsupport::scripted(Json::array(
        {pattern({"## Question"}, "The evidence is attached.\nANSWER: yes"),
         pattern({"Step 1 of"}, "Thought: t\nAction: search[case_documents] documentos irregularidade"),
         pattern({"Step 2 of"}, "Thought: t\nAction: conclude the documents look fine")})));
    CHECK(examine_criterion(Criterion::ExistenceOfEvidence, kContext, corpora, gw).label == Label::Yes);
}

TEST_CASE("aggregation rule") {
    const std::vector<CriterionVerdict> yes(5, labeled(Label::Yes));
    CHECK(overall_admissible(yes));
    auto one_no = yes;
    one_no[2] = labeled(Label::No);
    CHECK_FALSE(overall_admissible(one_no));
    CHECK(overall_admissible(std::vector<CriterionVerdict>(5, labeled(Label::Partial))));
    CHECK(overall_admissible(std::vector<CriterionVerdict>(5, labeled(Label::NotApplicable))));
}

TEST_CASE("examine_all") {
    std::map<Criterion, std::string> answers;
    SUBCASE("five yes") {
        for (const auto c : kAllCriteria) answers[c] = "yes";
        const auto corpora = corpora_in(all_indexes());
        llm::LlmGateway gw(testsupport::scripted(script_for(answers)));
        const auto r = examine_all(kContext, corpora, gw);
        CHECK(r.overall_admissible);
        CHECK_FALSE(r.flagged_for_review);
        REQUIRE(r.verdicts.size() == 5);
        for (std::size_t i = 0; i < 5; ++i) CHECK(r.verdicts[i].criterion == kAllCriteria[i]);
        for (const auto& v : r.verdicts) CHECK(!v.citations.empty());
    }
    SUBCASE("one no") {
        for (const auto c : kAllCriteria) answers[c] = "yes";
        answers[Criterion::PublicInterest] = "no";
        llm::LlmGateway gw(testsupport::scripted(script_for(answers)));
        const auto r = examine_all(kContext, corpora_in(all_indexes()), gw);
        CHECK_FALSE(r.overall_admissible);
        CHECK(r.verdict(Criterion::PublicInterest).label == Label::No);
    }
    SUBCASE("all partial") {
        for (const auto c : kAllCriteria) answers[c] = "partial";
        llm::LlmGateway gw(testsupport::scripted(script_for(answers)));
        const auto r = examine_all(kContext, corpora_in(all_indexes()), gw);
        CHECK(r.overall_admissible);
        CHECK(r.flagged_for_review);
    }
    SUBCASE("a failing criterion does not stop the others") {
        for (const auto c : kAllCriteria) answers[c] = "yes";
        answers.erase(Criterion::Competency); // unscripted: the backend throws
        llm::LlmGateway gw(testsupport::scripted(script_for(answers)));
        const auto r = examine_all(kContext, corpora_in(all_indexes()), gw);
        REQUIRE(r.verdicts.size() == 5);
        CHECK(criteria_of(r) == std::set<Criterion>(kAllCriteria.begin(), kAllCriteria.end()));
        const auto& failed = r.verdict(Criterion::Competency);
        CHECK(failed.label == Label::NotApplicable);
        REQUIRE(failed.flags.size() == 1);
        CHECK(failed.flags[0].rfind("failed:", 0) == 0);
        CHECK(r.verdict(Criterion::ClearWriting).label == Label::Yes);
        CHECK(r.flagged_for_review);
    }
}

TEST_CASE("report is independent of corpus registration order") {
    std::map<Criterion, std::string> answers;
    for (const auto c : kAllCriteria) answers[c] = c == Criterion::ClearWriting ? "partial" : "yes";
    auto indexes = all_indexes();
    llm::LlmGateway a(testsupport::scripted(script_for(answers)));
    const auto forward = examine_all(kContext, corpora_in(indexes), a);
    std::reverse(indexes.begin(), indexes.end());
    llm::LlmGateway b(testsupport::scripted(script_for(answers)));
    const auto backward = examine_all(kContext, corpora_in(indexes), b);
    CHECK(forward == backward);

    AdmissibilityReport copy;
    from_json(Json(forward), copy);
    CHECK(copy == forward);
    CHECK_THROWS_AS(AdmissibilityReport{}.verdict(Criterion::Legitimacy), Error);
}
