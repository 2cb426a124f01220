#pragma once

#include "casework/json_io.hpp"
#include "casework/llm.hpp"

#include <array>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace casework::recommendations {

enum class SectionId { BasicInfo, ClaimsRequests, Admissibility, Precautionary, Recommendations };

inline constexpr std::array<SectionId, 5> kAllSections = {SectionId::BasicInfo, SectionId::ClaimsRequests,
                                                          SectionId::Admissibility, SectionId::Precautionary,
                                                          SectionId::Recommendations};

std::string_view to_string(SectionId s);
SectionId section_from_string(std::string_view s);
/// Human title used in the Markdown headers.
std::string_view section_title(SectionId s);

/// Outputs of the analysis stages, keyed by stage name
/// (basic_info, allegations, admissibility, periculum, fumus).
struct StageOutputs {
    std::string case_id;
    std::map<std::string, Json> outputs;

    const Json* find(std::string_view stage) const;
};

/// Names of the stages a section is drafted from.
std::vector<std::string> section_dependencies(SectionId s);

/// Human-written guidance and exemplars: one global text plus optional
/// per-section texts.
struct Guidelines {
    std::string global;
    std::map<SectionId, std::string> sections;

    static Guidelines from_json(const Json& j);
    Json to_json() const;
};

struct InstructionSection {
    SectionId section_id = SectionId::BasicInfo;
    std::string text;
    std::string inputs_digest;

    bool operator==(const InstructionSection&) const = default;
};

struct InstructionDraft {
    std::string case_id;
    std::vector<InstructionSection> sections;
    std::string generated_at;

    const InstructionSection& section(SectionId s) const;
    /// Fixed headers, sections in canonical order, trailing newline.
    std::string to_markdown() const;
    Json to_json() const;
    static InstructionDraft from_json(const Json& j);

    bool operator==(const InstructionDraft&) const = default;
};

/// Digest of exactly what a section consumes. Throws MissingStage.
std::string section_inputs_digest(SectionId s, const StageOutputs& outputs, const Guidelines& guidelines);

/// The drafting prompt for one section. Throws MissingStage.
std::string section_prompt(SectionId s, const StageOutputs& outputs, const Guidelines& guidelines,
                           std::size_t prompt_budget, const llm::Tokenizer& tokenizer);

InstructionSection generate_section(SectionId s, const StageOutputs& outputs, const Guidelines& guidelines,
                                    llm::LlmGateway& gateway);

/// Orders the five sections canonically; a missing or repeated section
/// throws AssemblyError.
InstructionDraft assemble_instruction(std::string case_id, std::vector<InstructionSection> sections,
                                      std::string generated_at);

/// Redrafts one section; every other section is carried over untouched.
InstructionDraft regenerate_section(const InstructionDraft& draft, SectionId s, const StageOutputs& outputs,
                                    const Guidelines& guidelines, llm::LlmGateway& gateway);

} // namespace casework::recommendations
