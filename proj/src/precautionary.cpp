#include "casework/precautionary.hpp"

#include "casework/agent.hpp"
#include "casework/error.hpp"
#include "casework/text.hpp"

#include <algorithm>
#include <set>

namespace casework::precautionary {

namespace {

constexpr std::string_view kDraftPhrase = "minuta de contrato";
constexpr std::size_t kDraftThreshold = 5;

bool contains_id(const std::vector<std::string>& ids, const std::string& id) {
    return std::find(ids.begin(), ids.end(), id) != ids.end();
}

void push_unique(std::vector<std::string>& ids, const std::string& id) {
    if (!contains_id(ids, id)) ids.push_back(id);
}

// Orders `ids` as they appear in `docs`.
std::vector<std::string> in_doc_order(std::span<const ingest::ExtractedDocument> docs,
                                      const std::vector<std::string>& ids) {
    std::vector<std::string> out;
    for (const auto& d : docs) {
        if (contains_id(ids, d.doc_id)) out.push_back(d.doc_id);
    }
    return out;
}

std::string yes_no_instructions() {
    return "Answer on two lines:\nANSWER: yes or no\nDOCUMENTS: comma-separated ids of the documents that support a "
           "yes answer (empty if no)\n";
}

std::optional<bool> parse_yes_no_word(std::string_view s) {
    std::string w = text::to_lower(text::trim(s));
    while (!w.empty() && (w.back() == '.' || w.back() == '*')) w.pop_back();
    while (!w.empty() && w.front() == '*') w.erase(0, 1);
    if (w == "yes" || w == "sim") return true;
    if (w == "no" || w == "não" || w == "nao") return false;
    return std::nullopt;
}

} // namespace

DraftFlagResult flag_draft_contract_docs(std::span<const ingest::ExtractedDocument> docs) {
    DraftFlagResult out;
    const bool apply = docs.size() >= kDraftThreshold;
    for (const auto& d : docs) {
        if (apply && text::contains_icase(d.text, kDraftPhrase)) {
            out.flagged.push_back(d.doc_id);
        } else {
            out.considered.push_back(d.doc_id);
        }
    }
    return out;
}

std::optional<YesNoReply> parse_yes_no_reply(std::string_view reply) {
    std::optional<bool> answer;
    YesNoReply out;
    for (const auto raw : text::split_lines(reply)) {
        const auto line = text::trim(raw);
        if (!answer && text::starts_with_icase(line, "answer:")) {
            answer = parse_yes_no_word(line.substr(7));
            if (!answer) return std::nullopt;
        } else if (text::starts_with_icase(line, "documents:")) {
            std::string_view rest = line.substr(10);
            while (!rest.empty()) {
                const auto comma = rest.find(',');
                const auto item = text::trim(rest.substr(0, comma));
                if (!item.empty() && text::to_lower(item) != "none") out.doc_ids.emplace_back(item);
                if (comma == std::string_view::npos) break;
                rest.remove_prefix(comma + 1);
            }
        }
    }
    if (!answer) return std::nullopt;
    out.yes = *answer;
    return out;
}

Signal detect_active_contract(std::span<const ingest::ExtractedDocument> considered,
                              const retrieval::CorpusSet& corpora, llm::LlmGateway& gateway,
                              const ActiveContractOptions& options) {
    require(!considered.empty(), "active-contract check needs at least one document");
    std::vector<std::string> considered_ids;
    for (const auto& d : considered) considered_ids.push_back(d.doc_id);

    Signal signal;
    std::vector<std::string> evidence;
    for (const auto& d : considered) {
        for (const auto& kw : options.keywords) {
            if (!kw.empty() && text::contains_icase(d.text, kw)) {
                push_unique(evidence, d.doc_id);
                break;
            }
        }
    }

    std::vector<retrieval::SearchHit> hits;
    if (corpora.has(CorpusId::CaseDocuments) && !text::tokenize(options.query).empty()) {
        for (auto& hit : corpora.search(CorpusId::CaseDocuments, options.query, options.top_k)) {
            if (contains_id(considered_ids, hit.doc_id)) hits.push_back(std::move(hit));
        }
    }
    if (!hits.empty()) {
        std::string prompt =
            "## Question\n\nDo the passages below show that a contract resulting from the procurement under review "
            "has already been signed or is currently in force?\n\n## Passages\n\n";
        std::string passages;
        for (const auto& hit : hits) {
            passages += "[document " + hit.doc_id + "] " + hit.text + "\n";
        }
        const std::string tail = "\n## Instructions\n\n" + yes_no_instructions();
        const std::size_t overhead = gateway.tokenizer().count(prompt + tail);
        require(overhead < gateway.prompt_budget(), "active-contract prompt exceeds the context budget");
        prompt += llm::truncate_to_budget(passages, gateway.prompt_budget() - overhead, gateway.tokenizer()) + tail;
        const auto reply = parse_yes_no_reply(gateway.complete(prompt).text);
        if (!reply) {
            signal.flags.push_back("active_contract_unparsed");
        } else if (reply->yes) {
            std::vector<std::string> cited;
            for (const auto& id : reply->doc_ids) {
                if (contains_id(considered_ids, id)) cited.push_back(id);
            }
            if (cited.empty()) {
                for (const auto& hit : hits) push_unique(cited, hit.doc_id);
            }
            for (const auto& id : cited) push_unique(evidence, id);
        }
    }
    signal.evidence_doc_ids = in_doc_order(considered, evidence);
    signal.present = !signal.evidence_doc_ids.empty();
    return signal;
}

namespace {

const std::string kDelayQuestion =
    "Does the material below report a delay, cancellation, suspension or other impediment affecting the "
    "procurement or the execution of the resulting contract?";

std::optional<YesNoReply> ask_delay(llm::LlmGateway& gateway, const std::string& prompt) {
    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string p =
            attempt == 0 ? prompt
                         : prompt + "\nYour previous reply could not be parsed. Start with a line 'ANSWER: yes' or "
                                    "'ANSWER: no'.\n";
        if (auto reply = parse_yes_no_reply(gateway.complete(p).text)) return reply;
    }
    return std::nullopt;
}

std::string delay_prompt(llm::LlmGateway& gateway, std::span<const ingest::ExtractedDocument> batch) {
    const std::string head = "## Question\n\n" + kDelayQuestion + "\n\n## Documents\n\n";
    const std::string tail = "\n## Instructions\n\n" + yes_no_instructions();
    const std::size_t overhead = gateway.tokenizer().count(head + tail) + 16 * batch.size();
    require(overhead < gateway.prompt_budget(), "delay prompt exceeds the context budget");
    const std::size_t share = (gateway.prompt_budget() - overhead) / batch.size();
    std::string body;
    for (const auto& d : batch) {
        body += "### Document " + d.doc_id + "\n\n" +
                llm::truncate_to_budget(d.text, std::max<std::size_t>(share, 1), gateway.tokenizer()) + "\n\n";
    }
    return head + body + tail;
}

} // namespace

Signal detect_delay_events(std::span<const ingest::ExtractedDocument> considered, llm::LlmGateway& gateway,
                           const DelayOptions& options) {
    require(!considered.empty(), "delay check needs at least one document");
    require(options.batch_size >= 1, "delay batch size must be at least 1");
    Signal signal;
    std::vector<std::string> evidence;

    const auto judge = [&](std::span<const ingest::ExtractedDocument> batch) {
        const auto reply = ask_delay(gateway, delay_prompt(gateway, batch));
        if (!reply) {
            for (const auto& d : batch) signal.flags.push_back("delay_unparsed:" + d.doc_id);
            return;
        }
        if (!reply->yes) return;
        std::vector<std::string> cited;
        for (const auto& d : batch) {
            if (batch.size() == 1 || contains_id(reply->doc_ids, d.doc_id)) cited.push_back(d.doc_id);
        }
        if (cited.empty()) {
            signal.flags.push_back("delay_batch_uncited");
            for (const auto& d : batch) cited.push_back(d.doc_id);
        }
        for (const auto& id : cited) push_unique(evidence, id);
    };

    const std::size_t single = std::min(options.max_document_calls, considered.size());
    for (std::size_t i = 0; i < single; ++i) {
        judge(considered.subspan(i, 1));
    }
    for (std::size_t i = single; i < considered.size(); i += options.batch_size) {
        judge(considered.subspan(i, std::min(options.batch_size, considered.size() - i)));
    }
    signal.evidence_doc_ids = in_doc_order(considered, evidence);
    signal.present = !signal.evidence_doc_ids.empty();
    return signal;
}

std::string_view to_string(PericulumVerdict v) {
    return v == PericulumVerdict::Accepted ? "Accepted" : "Rejected";
}

PericulumVerdict periculum_verdict_from_string(std::string_view s) {
    if (s == "Accepted") return PericulumVerdict::Accepted;
    if (s == "Rejected") return PericulumVerdict::Rejected;
    throw Error(ErrorKind::ParseError, "unknown periculum verdict '" + std::string(s) + "'");
}

PericulumVerdict decide_periculum(bool active_contract, bool delay_event) {
    if (active_contract) return PericulumVerdict::Rejected;
    if (delay_event) return PericulumVerdict::Rejected;
    return PericulumVerdict::Accepted;
}

namespace {

Json signal_json(const Signal& s) {
    return Json{{"present", s.present}, {"evidence_doc_ids", s.evidence_doc_ids}, {"flags", s.flags}};
}

Signal signal_from(const Json& j) {
    Signal s;
    s.present = j.at("present").get<bool>();
    s.evidence_doc_ids = j.at("evidence_doc_ids").get<std::vector<std::string>>();
    s.flags = j.value("flags", std::vector<std::string>{});
    return s;
}

} // namespace

void to_json(Json& j, const PericulumFinding& f) {
    j = Json{{"draft_contract_doc_ids", f.draft_contract_doc_ids},
             {"active_contract", signal_json(f.active_contract)},
             {"delay_event", signal_json(f.delay_event)},
             {"verdict", std::string(to_string(f.verdict))},
             {"text", f.text},
             {"flags", f.flags}};
}

void from_json(const Json& j, PericulumFinding& f) {
    f.draft_contract_doc_ids = j.at("draft_contract_doc_ids").get<std::vector<std::string>>();
    f.active_contract = signal_from(j.at("active_contract"));
    f.delay_event = signal_from(j.at("delay_event"));
    f.verdict = periculum_verdict_from_string(j.at("verdict").get<std::string>());
    f.text = j.at("text").get<std::string>();
    f.flags = j.value("flags", std::vector<std::string>{});
}

namespace {

bool mentions_any(std::string_view text, std::initializer_list<std::string_view> words) {
    return std::any_of(words.begin(), words.end(), [&](std::string_view w) { return text::contains_icase(text, w); });
}

bool draft_matches(std::string_view draft, PericulumVerdict verdict) {
    const bool says_rejected = mentions_any(draft, {"rejected", "rejeitad"});
    const bool says_accepted = mentions_any(draft, {"accepted", "acolhid"});
    return verdict == PericulumVerdict::Rejected ? (says_rejected && !says_accepted)
                                                 : (says_accepted && !says_rejected);
}

std::string ids_or_none(const std::vector<std::string>& ids) {
    return ids.empty() ? std::string("none") : text::join(ids, ", ");
}

} // namespace

std::string draft_periculum_text(const PericulumFinding& finding, llm::LlmGateway& gateway) {
    const std::string verdict(to_string(finding.verdict));
    std::string prompt =
        "## Decision rules\n\n"
        "1. If a contract is already signed or in force, the precautionary request is rejected: there is no danger "
        "in delay because the court cannot prevent a contract from coming into force.\n"
        "2. Otherwise, if the procurement or the contract execution has been delayed, cancelled or suspended, the "
        "request is rejected: there is no danger in delay because execution has been halted.\n"
        "3. Otherwise the danger in delay is accepted.\n\n"
        "## Findings\n\n"
        "Active contract: " + std::string(finding.active_contract.present ? "yes" : "no") +
        " (documents: " + ids_or_none(finding.active_contract.evidence_doc_ids) + ")\n"
        "Delay, cancellation or impediment: " + std::string(finding.delay_event.present ? "yes" : "no") +
        " (documents: " + ids_or_none(finding.delay_event.evidence_doc_ids) + ")\n"
        "Documents set aside as draft contracts: " + ids_or_none(finding.draft_contract_doc_ids) + "\n"
        "Verdict: " + verdict + "\n\n"
        "## Instructions\n\n"
        "Write one paragraph for the instruction explaining the danger-in-delay analysis. State the verdict using "
        "the word \"" + text::to_lower(verdict) + "\" and cite the supporting document ids.\n";
    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string p = attempt == 0 ? prompt
                                           : prompt + "\nThe previous draft did not state the verdict \"" +
                                                 text::to_lower(verdict) + "\" consistently. Write it again.\n";
        std::string draft(text::trim(gateway.complete(p).text));
        if (!draft.empty() && draft_matches(draft, finding.verdict)) return draft;
    }
    throw Error(ErrorKind::DraftMismatch, "drafted paragraph does not state the verdict " + verdict);
}

PericulumFinding analyze_periculum(std::span<const ingest::ExtractedDocument> docs,
                                   const retrieval::CorpusSet& corpora, llm::LlmGateway& gateway,
                                   const PericulumOptions& options) {
    require(!docs.empty(), "periculum analysis needs at least one document");
    PericulumFinding finding;
    const auto flagged = flag_draft_contract_docs(docs);
    finding.draft_contract_doc_ids = flagged.flagged;
    std::vector<ingest::ExtractedDocument> considered;
    for (const auto& d : docs) {
        if (contains_id(flagged.considered, d.doc_id)) considered.push_back(d);
    }
    finding.active_contract = detect_active_contract(considered, corpora, gateway, options.active);
    finding.delay_event = detect_delay_events(considered, gateway, options.delay);
    finding.verdict = decide_periculum(finding.active_contract.present, finding.delay_event.present);
    for (const auto* s : {&finding.active_contract, &finding.delay_event}) {
        finding.flags.insert(finding.flags.end(), s->flags.begin(), s->flags.end());
    }
    finding.text = draft_periculum_text(finding, gateway);
    return finding;
}

// ---------------------------------------------------------------------------

std::string_view to_string(FumusLabel l) {
    switch (l) {
    case FumusLabel::GroundedInLaw: return "GroundedInLaw";
    case FumusLabel::NotGrounded: return "NotGrounded";
    case FumusLabel::Inconclusive: return "Inconclusive";
    }
    return "Inconclusive";
}

FumusLabel fumus_label_from_string(std::string_view s) {
    for (const FumusLabel l : {FumusLabel::GroundedInLaw, FumusLabel::NotGrounded, FumusLabel::Inconclusive}) {
        if (to_string(l) == s) return l;
    }
    throw Error(ErrorKind::ParseError, "unknown fumus label '" + std::string(s) + "'");
}

std::optional<FumusLabel> parse_fumus_label(std::string_view answer) {
    std::string a = text::to_lower(text::trim(answer));
    const auto first = a.find_first_not_of("*\"'`(-:. ");
    if (first == std::string::npos) return std::nullopt;
    a.erase(0, first);
    const auto starts = [&](std::string_view p) { return a.rfind(p, 0) == 0; };
    for (const std::string_view p : {"not grounded", "notgrounded", "ungrounded", "não fundamentad",
                                     "nao fundamentad", "sem fundamento"}) {
        if (starts(p)) return FumusLabel::NotGrounded;
    }
    for (const std::string_view p : {"grounded", "fundamentad"}) {
        if (starts(p)) return FumusLabel::GroundedInLaw;
    }
    for (const std::string_view p : {"inconclusive", "inconclusiv"}) {
        if (starts(p)) return FumusLabel::Inconclusive;
    }
    return std::nullopt;
}

void to_json(Json& j, const FumusClassification& c) {
    j = Json{{"allegation_index", c.allegation_index},
             {"label", std::string(to_string(c.label))},
             {"rationale", c.rationale},
             {"citations", c.citations},
             {"flags", c.flags}};
}

void from_json(const Json& j, FumusClassification& c) {
    c.allegation_index = j.at("allegation_index").get<std::size_t>();
    c.label = fumus_label_from_string(j.at("label").get<std::string>());
    c.rationale = j.at("rationale").get<std::string>();
    c.citations = j.at("citations").get<std::vector<Citation>>();
    c.flags = j.value("flags", std::vector<std::string>{});
}

void to_json(Json& j, const FumusReport& r) {
    j = Json{{"classifications", r.classifications}, {"summary", r.summary}};
}

void from_json(const Json& j, FumusReport& r) {
    r.classifications = j.at("classifications").get<std::vector<FumusClassification>>();
    r.summary = j.at("summary").get<std::string>();
}

namespace {

constexpr std::array<CorpusId, 3> kFumusCorpora = {CorpusId::StatutesFederalLaw, CorpusId::Jurisprudence,
                                                   CorpusId::CaseDocuments};

std::string fumus_question(const extraction::EnumeratedItem& allegation) {
    return "Is the following allegation grounded in law, according to the statutes, federal law and the court's "
           "jurisprudence?\nAllegation " + std::to_string(allegation.index) + ": " + allegation.text;
}

} // namespace

FumusClassification classify_allegation_fumus(const extraction::EnumeratedItem& allegation,
                                              const retrieval::CorpusSet& corpora, llm::LlmGateway& gateway,
                                              const FumusOptions& options) {
    require(!text::trim(allegation.text).empty(), "allegation text is empty");
    require(corpora.has(CorpusId::StatutesFederalLaw) && corpora.has(CorpusId::Jurisprudence),
            "statutes and jurisprudence corpora must be indexed");

    FumusClassification out;
    out.allegation_index = allegation.index;
    const auto tools = llm::make_search_tools(corpora, kFumusCorpora, options.top_k);
    const std::string task = fumus_question(allegation) +
                             "\nSearch the statutes and the jurisprudence before concluding. Conclude with one of: "
                             "grounded in law, not grounded, inconclusive.";
    const auto trace = llm::react_loop(gateway, tools, task, options.max_steps);
    const auto evidence = trace.evidence();
    for (const auto& hit : evidence) {
        out.citations.push_back({hit.corpus, hit.doc_id, hit.passage_id});
    }

    if (trace.status == llm::AgentStatus::BudgetExhausted) {
        out.label = FumusLabel::Inconclusive;
        out.flags.push_back("budget_exhausted");
        out.rationale = "The search budget was exhausted after " + std::to_string(trace.search_count()) +
                        " queries without a conclusion on allegation " + std::to_string(allegation.index) + ".";
        return out;
    }

    std::optional<FumusLabel> label = parse_fumus_label(trace.conclusion().action.answer);
    if (trace.search_count() == 0 && label && *label != FumusLabel::Inconclusive) {
        out.flags.push_back("concluded_without_search");
        label = FumusLabel::Inconclusive;
    }
    if (evidence.empty()) {
        out.label = FumusLabel::Inconclusive;
        if (!contains_id(out.flags, "concluded_without_search")) out.flags.push_back("no_evidence");
        out.rationale = "No statute or precedent relevant to allegation " + std::to_string(allegation.index) +
                        " was retrieved.";
        return out;
    }

    std::vector<std::string> passages;
    for (const auto& hit : evidence) {
        passages.push_back(llm::format_hits(std::span<const retrieval::SearchHit>(&hit, 1)));
    }
    const auto cot = llm::cot_reason(gateway, fumus_question(allegation), passages);
    out.rationale = cot.rationale_paragraph;
    if (!label) label = parse_fumus_label(cot.answer);
    if (!label) {
        out.flags.push_back("unparsed_label");
        label = FumusLabel::Inconclusive;
    }
    out.label = *label;
    return out;
}

std::string fumus_summary(const std::vector<FumusClassification>& classifications) {
    if (classifications.empty()) {
        return "No allegations were identified, so no allegation was assessed for legal grounding.";
    }
    std::size_t grounded = 0, not_grounded = 0, inconclusive = 0;
    for (const auto& c : classifications) {
        if (c.label == FumusLabel::GroundedInLaw) ++grounded;
        else if (c.label == FumusLabel::NotGrounded) ++not_grounded;
        else ++inconclusive;
    }
    return "Of the " + std::to_string(classifications.size()) + " allegations examined, " +
           std::to_string(grounded) + " were found grounded in law, " + std::to_string(not_grounded) +
           " not grounded and " + std::to_string(inconclusive) + " inconclusive.";
}

FumusReport classify_fumus(const extraction::AllegationList& allegations, const retrieval::CorpusSet& corpora,
                           llm::LlmGateway& gateway, const FumusOptions& options) {
    FumusReport report;
    for (const auto& a : allegations.allegations) {
        try {
            report.classifications.push_back(classify_allegation_fumus(a, corpora, gateway, options));
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::PreconditionViolation) throw;
            FumusClassification failed;
            failed.allegation_index = a.index;
            failed.label = FumusLabel::Inconclusive;
            failed.flags.push_back("failed:" + std::string(casework::to_string(e.kind())));
            failed.rationale = "The classification of allegation " + std::to_string(a.index) + " failed: " + e.what();
            report.classifications.push_back(std::move(failed));
        }
    }
    report.summary = fumus_summary(report.classifications);
    return report;
}

} // namespace casework::precautionary
