#include "casework/admissibility.hpp"

#include "casework/error.hpp"
#include "casework/text.hpp"

#include <algorithm>

namespace casework::admissibility {

std::string_view to_string(Criterion c) {
    switch (c) {
    case Criterion::Legitimacy: return "Legitimacy";
    case Criterion::Competency: return "Competency";
    case Criterion::ExistenceOfEvidence: return "ExistenceOfEvidence";
    case Criterion::PublicInterest: return "PublicInterest";
    case Criterion::ClearWriting: return "ClearWriting";
    }
    return "Legitimacy";
}

Criterion criterion_from_string(std::string_view s) {
    for (const Criterion c : kAllCriteria) {
        if (to_string(c) == s) return c;
    }
    throw Error(ErrorKind::ParseError, "unknown criterion '" + std::string(s) + "'");
}

std::string_view to_string(Label l) {
    switch (l) {
    case Label::Yes: return "Yes";
    case Label::No: return "No";
    case Label::Partial: return "Partial";
    case Label::NotApplicable: return "NotApplicable";
    }
    return "NotApplicable";
}

Label label_from_string(std::string_view s) {
    for (const Label l : {Label::Yes, Label::No, Label::Partial, Label::NotApplicable}) {
        if (to_string(l) == s) return l;
    }
    throw Error(ErrorKind::ParseError, "unknown admissibility label '" + std::string(s) + "'");
}

std::optional<Label> parse_label(std::string_view answer) {
    std::string lowered = text::to_lower(text::trim(answer));
    // Drop leading punctuation/markup such as "**" or quotes.
    const auto first = lowered.find_first_not_of("*\"'`(-:. ");
    if (first == std::string::npos) return std::nullopt;
    lowered.erase(0, first);
    const auto word_at_start = [&](std::string_view w) {
        if (lowered.compare(0, w.size(), w) != 0) return false;
        if (lowered.size() == w.size()) return true;
        const unsigned char next = static_cast<unsigned char>(lowered[w.size()]);
        return !(std::isalnum(next) || next >= 0x80);
    };
    for (const std::string_view w : {"not applicable", "n/a", "não se aplica", "nao se aplica", "não aplicável",
                                     "nao aplicavel", "notapplicable"}) {
        if (word_at_start(w)) return Label::NotApplicable;
    }
    for (const std::string_view w : {"partial", "partially", "parcial", "parcialmente"}) {
        if (word_at_start(w)) return Label::Partial;
    }
    for (const std::string_view w : {"yes", "sim"}) {
        if (word_at_start(w)) return Label::Yes;
    }
    for (const std::string_view w : {"no", "não", "nao"}) {
        if (word_at_start(w)) return Label::No;
    }
    return std::nullopt;
}

const CriterionVerdict& AdmissibilityReport::verdict(Criterion c) const {
    const auto it = std::find_if(verdicts.begin(), verdicts.end(),
                                 [&](const CriterionVerdict& v) { return v.criterion == c; });
    if (it == verdicts.end()) {
        throw Error(ErrorKind::NotFound, "no verdict for " + std::string(to_string(c)));
    }
    return *it;
}

void to_json(Json& j, const Citation& c) {
    j = Json{{"corpus", std::string(to_string(c.corpus))}, {"doc_id", c.doc_id}, {"passage_id", c.passage_id}};
}

void from_json(const Json& j, Citation& c) {
    c.corpus = corpus_from_string(j.at("corpus").get<std::string>());
    c.doc_id = j.at("doc_id").get<std::string>();
    c.passage_id = j.at("passage_id").get<std::string>();
}

void to_json(Json& j, const CriterionVerdict& v) {
    j = Json{{"criterion", std::string(to_string(v.criterion))},
             {"label", std::string(to_string(v.label))},
             {"rationale", v.rationale},
             {"citations", v.citations},
             {"flags", v.flags},
             {"searches", v.searches}};
}

void from_json(const Json& j, CriterionVerdict& v) {
    v.criterion = criterion_from_string(j.at("criterion").get<std::string>());
    v.label = label_from_string(j.at("label").get<std::string>());
    v.rationale = j.at("rationale").get<std::string>();
    v.citations = j.at("citations").get<std::vector<Citation>>();
    v.flags = j.value("flags", std::vector<std::string>{});
    v.searches = j.value("searches", std::size_t{0});
}

void to_json(Json& j, const AdmissibilityReport& r) {
    j = Json{{"verdicts", r.verdicts},
             {"overall_admissible", r.overall_admissible},
             {"flagged_for_review", r.flagged_for_review}};
}

void from_json(const Json& j, AdmissibilityReport& r) {
    r.verdicts = j.at("verdicts").get<std::vector<CriterionVerdict>>();
    r.overall_admissible = j.at("overall_admissible").get<bool>();
    r.flagged_for_review = j.value("flagged_for_review", false);
}

std::string criterion_question(Criterion c) {
    switch (c) {
    case Criterion::Legitimacy:
        return "Does the plaintiff have legitimacy (standing) to file this claim with the court?";
    case Criterion::Competency:
        return "Is the subject of the claim within the court's competency, i.e. does it involve federal public "
               "resources or a body under the court's jurisdiction?";
    case Criterion::ExistenceOfEvidence:
        return "Does the claim come with evidence or concrete indications of the alleged irregularity?";
    case Criterion::PublicInterest:
        return "Does the claim concern a matter of public interest rather than a purely private interest of the "
               "plaintiff?";
    case Criterion::ClearWriting:
        return "Is the claim written in clear and objective language, identifying the responsible parties and the "
               "facts?";
    }
    return {};
}

namespace {

// Search used when the agent concluded without retrieving anything. The
// corpora are Portuguese, so each query carries both languages.
std::pair<CorpusId, std::string> fallback_query(Criterion c) {
    switch (c) {
    case Criterion::Legitimacy:
        return {CorpusId::InternalCodes, "legitimidade para representar legitimacy to file a representação"};
    case Criterion::Competency:
        return {CorpusId::InternalCodes, "competência do tribunal recursos federais competency federal resources"};
    case Criterion::ExistenceOfEvidence:
        return {CorpusId::CaseDocuments, "indícios provas documentos da irregularidade evidence"};
    case Criterion::PublicInterest:
        return {CorpusId::InternalCodes, "interesse público public interest"};
    case Criterion::ClearWriting:
        return {CorpusId::InternalCodes, "linguagem clara e objetiva clear objective language"};
    }
    return {CorpusId::InternalCodes, "admissibility"};
}

std::string task_prompt(Criterion c, const CaseContext& context) {
    return "Examine the admissibility criterion \"" + std::string(to_string(c)) + "\" for case " + context.case_id +
           ".\nQuestion: " + criterion_question(c) +
           "\nConclude with one of: yes, no, partial, not applicable.\n\nCase excerpt:\n" + context.excerpt;
}

} // namespace

CriterionVerdict examine_criterion(Criterion criterion, const CaseContext& context,
                                   const retrieval::CorpusSet& corpora, llm::LlmGateway& gateway,
                                   const ExamineOptions& options) {
    CriterionVerdict verdict;
    verdict.criterion = criterion;

    const auto tools = llm::make_search_tools(corpora, kAllCorpora, options.top_k);
    const auto trace = llm::react_loop(gateway, tools, task_prompt(criterion, context), options.max_steps);
    verdict.searches = trace.search_count();
    auto evidence = trace.evidence();
    const auto cite = [&] {
        for (const auto& hit : evidence) {
            verdict.citations.push_back({hit.corpus, hit.doc_id, hit.passage_id});
        }
    };

    if (trace.status == llm::AgentStatus::BudgetExhausted) {
        verdict.label = Label::NotApplicable;
        verdict.flags.push_back("budget_exhausted");
        verdict.rationale = "The examination of " + std::string(to_string(criterion)) + " stopped after " +
                            std::to_string(verdict.searches) +
                            " searches without reaching a conclusion; the criterion needs manual review.";
        cite();
        return verdict;
    }

    std::optional<Label> label = parse_label(trace.conclusion().action.answer);
    if (evidence.empty()) {
        const auto [corpus, query] = fallback_query(criterion);
        if (corpora.has(corpus)) {
            evidence = corpora.search(corpus, query, options.top_k);
        }
    }
    if (evidence.empty()) {
        verdict.label = Label::NotApplicable;
        verdict.flags.push_back("no_evidence");
        verdict.rationale = "No passage relevant to " + std::string(to_string(criterion)) +
                            " was retrieved, so the criterion could not be assessed.";
        return verdict;
    }
    cite();

    std::vector<std::string> passages;
    passages.reserve(evidence.size());
    for (const auto& hit : evidence) {
        passages.push_back(llm::format_hits(std::span<const retrieval::SearchHit>(&hit, 1)));
    }
    const auto cot = llm::cot_reason(gateway, criterion_question(criterion), passages);
    verdict.rationale = cot.rationale_paragraph;
    if (!label) {
        label = parse_label(cot.answer);
    }
    if (!label) {
        verdict.flags.push_back("unparsed_label");
        label = Label::NotApplicable;
    }
    verdict.label = *label;
    return verdict;
}

bool overall_admissible(const std::vector<CriterionVerdict>& verdicts) {
    return std::none_of(verdicts.begin(), verdicts.end(), [](const CriterionVerdict& v) { return v.label == Label::No; });
}

AdmissibilityReport examine_all(const CaseContext& context, const retrieval::CorpusSet& corpora,
                                llm::LlmGateway& gateway, const ExamineOptions& options) {
    AdmissibilityReport report;
    for (const Criterion c : kAllCriteria) {
        try {
            report.verdicts.push_back(examine_criterion(c, context, corpora, gateway, options));
        } catch (const Error& e) {
            CriterionVerdict failed;
            failed.criterion = c;
            failed.label = Label::NotApplicable;
            failed.flags.push_back("failed:" + std::string(casework::to_string(e.kind())));
            failed.rationale = "The examination of " + std::string(to_string(c)) + " failed: " + e.what();
            report.verdicts.push_back(std::move(failed));
        }
    }
    report.overall_admissible = overall_admissible(report.verdicts);
    report.flagged_for_review = std::any_of(report.verdicts.begin(), report.verdicts.end(), [](const auto& v) {
        return v.label == Label::Partial || v.label == Label::NotApplicable || !v.flags.empty();
    });
    return report;
}

} // namespace casework::admissibility
