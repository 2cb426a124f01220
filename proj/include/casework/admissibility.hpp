#pragma once

#include "casework/agent.hpp"
#include "casework/json_io.hpp"
#include "casework/llm.hpp"
#include "casework/retrieval.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace casework::admissibility {

enum class Criterion { Legitimacy, Competency, ExistenceOfEvidence, PublicInterest, ClearWriting };

inline constexpr std::array<Criterion, 5> kAllCriteria = {Criterion::Legitimacy, Criterion::Competency,
                                                          Criterion::ExistenceOfEvidence, Criterion::PublicInterest,
                                                          Criterion::ClearWriting};

std::string_view to_string(Criterion c);
Criterion criterion_from_string(std::string_view s);

enum class Label { Yes, No, Partial, NotApplicable };
std::string_view to_string(Label l);
Label label_from_string(std::string_view s);

/// Reads a label from free text ("yes", "no", "partially met", "sim",
/// "não se aplica", ...). Only the leading words are considered.
std::optional<Label> parse_label(std::string_view answer);

struct Citation {
    CorpusId corpus = CorpusId::CaseDocuments;
    std::string doc_id;
    std::string passage_id;

    bool operator==(const Citation&) const = default;
};

struct CriterionVerdict {
    Criterion criterion = Criterion::Legitimacy;
    Label label = Label::NotApplicable;
    std::string rationale;
    std::vector<Citation> citations;
    /// Reasons for human review: "budget_exhausted", "no_evidence", ...
    std::vector<std::string> flags;
    std::size_t searches = 0;

    bool operator==(const CriterionVerdict&) const = default;
};

struct AdmissibilityReport {
    std::vector<CriterionVerdict> verdicts;
    bool overall_admissible = false;
    bool flagged_for_review = false;

    const CriterionVerdict& verdict(Criterion c) const;
    bool operator==(const AdmissibilityReport&) const = default;
};

void to_json(Json& j, const Citation& c);
void from_json(const Json& j, Citation& c);
void to_json(Json& j, const CriterionVerdict& v);
void from_json(const Json& j, CriterionVerdict& v);
void to_json(Json& j, const AdmissibilityReport& r);
void from_json(const Json& j, AdmissibilityReport& r);

/// What the agent is told about the case.
struct CaseContext {
    std::string case_id;
    /// Opening of the main document, already trimmed to a sensible size.
    std::string excerpt;
};

struct ExamineOptions {
    std::size_t max_steps = 6;
    std::size_t top_k = 5;
};

/// The question put to the agent for one criterion.
std::string criterion_question(Criterion c);

CriterionVerdict examine_criterion(Criterion criterion, const CaseContext& context,
                                   const retrieval::CorpusSet& corpora, llm::LlmGateway& gateway,
                                   const ExamineOptions& options = {});

/// Admissible unless some criterion is labeled No.
bool overall_admissible(const std::vector<CriterionVerdict>& verdicts);

/// All five criteria in enum order. A criterion that throws becomes a
/// flagged NotApplicable verdict; the others still run.
AdmissibilityReport examine_all(const CaseContext& context, const retrieval::CorpusSet& corpora,
                                llm::LlmGateway& gateway, const ExamineOptions& options = {});

} // namespace casework::admissibility
