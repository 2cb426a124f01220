#pragma once

#include "casework/admissibility.hpp"
#include "casework/info_extraction.hpp"
#include "casework/ingest.hpp"
#include "casework/json_io.hpp"
#include "casework/llm.hpp"
#include "casework/retrieval.hpp"

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace casework::precautionary {

using admissibility::Citation;

struct DraftFlagResult {
    std::vector<std::string> flagged;
    std::vector<std::string> considered;
};

/// With five or more documents, those containing "minuta de contrato"
/// (any case) are set aside; smaller cases keep every document.
DraftFlagResult flag_draft_contract_docs(std::span<const ingest::ExtractedDocument> docs);

struct Signal {
    bool present = false;
    std::vector<std::string> evidence_doc_ids;
    std::vector<std::string> flags;

    bool operator==(const Signal&) const = default;
};

/// "ANSWER: yes|no" plus an optional "DOCUMENTS: id, id" line.
struct YesNoReply {
    bool yes = false;
    std::vector<std::string> doc_ids;
};
std::optional<YesNoReply> parse_yes_no_reply(std::string_view reply);

struct ActiveContractOptions {
    std::vector<std::string> keywords = {"contrato assinado", "contrato vigente", "contrato nº"};
    std::string query = "contrato assinado vigente assinatura do contrato";
    std::size_t top_k = 5;
};

/// Keyword scan OR model verification over retrieved case passages.
/// Only `considered` documents can contribute evidence.
Signal detect_active_contract(std::span<const ingest::ExtractedDocument> considered,
                              const retrieval::CorpusSet& corpora, llm::LlmGateway& gateway,
                              const ActiveContractOptions& options = {});

struct DelayOptions {
    /// Documents beyond this count are sent in batches.
    std::size_t max_document_calls = 20;
    std::size_t batch_size = 5;
};

/// Model judgment only: one call per document, then batches.
Signal detect_delay_events(std::span<const ingest::ExtractedDocument> considered, llm::LlmGateway& gateway,
                           const DelayOptions& options = {});

enum class PericulumVerdict { Accepted, Rejected };
std::string_view to_string(PericulumVerdict v);
PericulumVerdict periculum_verdict_from_string(std::string_view s);

PericulumVerdict decide_periculum(bool active_contract, bool delay_event);

struct PericulumFinding {
    std::vector<std::string> draft_contract_doc_ids;
    Signal active_contract;
    Signal delay_event;
    PericulumVerdict verdict = PericulumVerdict::Accepted;
    std::string text;
    std::vector<std::string> flags;

    bool operator==(const PericulumFinding&) const = default;
};

void to_json(Json& j, const PericulumFinding& f);
void from_json(const Json& j, PericulumFinding& f);

/// Asks the model for the verdict paragraph and checks that it names the
/// finding's verdict; one regeneration, then DraftMismatch.
std::string draft_periculum_text(const PericulumFinding& finding, llm::LlmGateway& gateway);

struct PericulumOptions {
    ActiveContractOptions active;
    DelayOptions delay;
};

/// The full step-wise flow: flagging, active contract, delay, rule, text.
PericulumFinding analyze_periculum(std::span<const ingest::ExtractedDocument> docs,
                                   const retrieval::CorpusSet& corpora, llm::LlmGateway& gateway,
                                   const PericulumOptions& options = {});

enum class FumusLabel { GroundedInLaw, NotGrounded, Inconclusive };
std::string_view to_string(FumusLabel l);
FumusLabel fumus_label_from_string(std::string_view s);
std::optional<FumusLabel> parse_fumus_label(std::string_view answer);

struct FumusClassification {
    std::size_t allegation_index = 0;
    FumusLabel label = FumusLabel::Inconclusive;
    std::string rationale;
    std::vector<Citation> citations;
    std::vector<std::string> flags;

    bool operator==(const FumusClassification&) const = default;
};

struct FumusReport {
    std::vector<FumusClassification> classifications;
    std::string summary;

    bool operator==(const FumusReport&) const = default;
};

void to_json(Json& j, const FumusClassification& c);
void from_json(const Json& j, FumusClassification& c);
void to_json(Json& j, const FumusReport& r);
void from_json(const Json& j, FumusReport& r);

struct FumusOptions {
    std::size_t max_steps = 6;
    std::size_t top_k = 5;
};

FumusClassification classify_allegation_fumus(const extraction::EnumeratedItem& allegation,
                                              const retrieval::CorpusSet& corpora, llm::LlmGateway& gateway,
                                              const FumusOptions& options = {});

/// One classification per allegation, in order; a failing allegation is
/// recorded as a flagged Inconclusive.
FumusReport classify_fumus(const extraction::AllegationList& allegations, const retrieval::CorpusSet& corpora,
                           llm::LlmGateway& gateway, const FumusOptions& options = {});

std::string fumus_summary(const std::vector<FumusClassification>& classifications);

} // namespace casework::precautionary
