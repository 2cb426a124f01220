#pragma once

#include "casework/admissibility.hpp"
#include "casework/info_extraction.hpp"
#include "casework/json_io.hpp"
#include "casework/recommendations.hpp"

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

// Builds the validation table from standardized, human-written instruction
// documents: section isolation by header, then label and field extraction.
namespace casework::validation {

using recommendations::SectionId;
using AdmissibilityCriterion = admissibility::Criterion;
using AdmissibilityValue = admissibility::Label;

enum class PrecautionaryCriterion { Periculum, ReversePericulum, Fumus };
inline constexpr std::array<PrecautionaryCriterion, 3> kPrecautionaryCriteria = {
    PrecautionaryCriterion::Periculum, PrecautionaryCriterion::ReversePericulum, PrecautionaryCriterion::Fumus};
std::string_view to_string(PrecautionaryCriterion c);
PrecautionaryCriterion precautionary_criterion_from_string(std::string_view s);

enum class PrecautionaryValue { Dismissed, Configured, Inconclusive, NotAnalyzed };
std::string_view to_string(PrecautionaryValue v);
PrecautionaryValue precautionary_value_from_string(std::string_view s);

/// Header names, criterion names and label tokens. The defaults accept
/// English and Portuguese spellings; the first entry of each list is the
/// one written by synthesize_instruction.
struct ValidationConfig {
    std::map<SectionId, std::vector<std::string>> headers;
    std::map<AdmissibilityCriterion, std::vector<std::string>> admissibility_names;
    std::map<AdmissibilityValue, std::vector<std::string>> admissibility_values;
    std::map<PrecautionaryCriterion, std::vector<std::string>> precautionary_names;
    std::map<PrecautionaryValue, std::vector<std::string>> precautionary_values;
    std::vector<std::string> allegation_markers;
    std::vector<std::string> request_markers;

    static ValidationConfig defaults();
    /// Defaults with any lists present in `j` replaced.
    static ValidationConfig from_json(const Json& j);
};

struct StandardInstruction {
    std::string case_id;
    std::string full_text;
};

struct SectionSpan {
    std::size_t header_begin = 0;
    std::size_t body_begin = 0;
    std::size_t body_end = 0;
};

/// Header positions of the sections present. Throws MalformedInstruction
/// on a repeated header or headers out of canonical order.
std::map<SectionId, SectionSpan> locate_sections(std::string_view text, const ValidationConfig& config);

/// Text strictly between the section's header line and the next header
/// (or the end). Throws SectionNotFound when the header is absent.
std::string isolate_section(const StandardInstruction& doc, SectionId section, const ValidationConfig& config);

struct ExtractedLabels {
    std::map<AdmissibilityCriterion, AdmissibilityValue> admissibility;
    std::map<PrecautionaryCriterion, PrecautionaryValue> precautionary;
};

/// Matches label tokens longest first; throws LabelParseError naming the
/// criterion whose line is missing or whose value is not recognized.
ExtractedLabels extract_labels(const StandardInstruction& doc, const ValidationConfig& config);

struct ValidationRecord {
    std::string case_id;
    std::map<std::string, std::string> basic_info;
    std::string claims_text;
    std::string requests_text;
    std::map<AdmissibilityCriterion, AdmissibilityValue> admissibility;
    std::map<PrecautionaryCriterion, PrecautionaryValue> precautionary;
    std::string recommendations_text;

    bool operator==(const ValidationRecord&) const = default;
};

void to_json(Json& j, const ValidationRecord& r);
void from_json(const Json& j, ValidationRecord& r);

/// Maps the Basic Information section text to field values.
using BasicInfoExtractor = std::function<std::map<std::string, std::string>(std::string_view section_text)>;

/// "field: value" lines for the schema's fields.
BasicInfoExtractor line_basic_info_extractor(extraction::FormSchema schema);

/// The first-pages extraction pass of info-extraction run over the section.
BasicInfoExtractor llm_basic_info_extractor(extraction::FormSchema schema, llm::LlmGateway& gateway);

ValidationRecord parse_instruction(const StandardInstruction& doc, const BasicInfoExtractor& basic_info,
                                   const ValidationConfig& config);

/// The inverse of parse_instruction for the line-based extractor.
StandardInstruction synthesize_instruction(const ValidationRecord& record, const ValidationConfig& config);

struct TableError {
    std::string case_id;
    std::string kind;
    std::string message;
};

struct ValidationTable {
    std::vector<ValidationRecord> records;
    std::vector<TableError> errors;
    std::vector<std::string> warnings;
};

/// One record per well-formed document; failures are listed, not thrown.
ValidationTable build_validation_table(const std::vector<StandardInstruction>& docs,
                                       const BasicInfoExtractor& basic_info, const ValidationConfig& config);

/// *.md and *.txt files of a directory, sorted by name; case_id = stem.
std::vector<StandardInstruction> load_instructions(const std::filesystem::path& dir);

std::string to_jsonl(const std::vector<ValidationRecord>& records);
/// case_id followed by the eight label columns.
std::string labels_csv(const std::vector<ValidationRecord>& records);

} // namespace casework::validation
