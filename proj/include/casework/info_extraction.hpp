#pragma once

#include "casework/ingest.hpp"
#include "casework/json_io.hpp"
#include "casework/llm.hpp"
#include "casework/retrieval.hpp"

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace casework::extraction {

struct FormField {
    std::string name;
    std::string description;
    bool required = false;
};

/// Ordered list of the basic-information variables recorded per case.
struct FormSchema {
    std::vector<FormField> fields;

    /// The shipped 26-field schema; override through configuration.
    static FormSchema default_schema();
    static FormSchema from_json(const Json& j);
    Json to_json() const;
    /// Throws ConfigError on empty or duplicate names.
    void validate() const;
    const FormField* find(std::string_view name) const;
};

enum class Provenance { FirstPages, RagSearch, CraftedQuery };
std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct FieldValue {
    std::optional<std::string> value;
    std::optional<Provenance> provenance;
    std::optional<std::string> source_doc_id;

    bool operator==(const FieldValue&) const = default;
};

/// Every schema field is a key; absent values are allowed.
struct FilledForm {
    std::map<std::string, FieldValue> fields;

    std::vector<std::string> missing(const FormSchema& schema) const;
    bool operator==(const FilledForm&) const = default;
};

void to_json(Json& j, const FilledForm& form);
void from_json(const Json& j, FilledForm& form);

/// The case's extracted documents with the main document identified.
struct CaseText {
    std::string main_doc_id;
    std::vector<ingest::ExtractedDocument> documents;

    const ingest::ExtractedDocument& main() const;
};

struct BasicInfoOptions {
    std::size_t page_chars = 3000;
    std::size_t top_k = 5;
    /// field name -> query template; may use {field} and {description}.
    std::map<std::string, std::string> crafted_queries;
};

/// Fills the form in three phases: the first two pages of the main
/// document; one model-composed query per still-missing field against the
/// case index; then the configured crafted queries followed by one final
/// extraction pass.
FilledForm extract_basic_info(const CaseText& case_text, const FormSchema& schema,
                              const retrieval::CorpusSet& corpora, llm::LlmGateway& gateway,
                              const BasicInfoOptions& options = {});

struct ParsedField {
    std::optional<std::string> value;
    std::optional<std::size_t> source; // 1-based passage number
};

/// "name: value [source n]" lines for fields in `allowed`; "UNKNOWN" marks
/// an absent value. Lines naming other fields are ignored.
std::map<std::string, ParsedField> parse_form_lines(std::string_view reply, const std::vector<std::string>& allowed);

struct EnumeratedItem {
    std::size_t index = 0;
    std::string text;

    bool operator==(const EnumeratedItem&) const = default;
};

struct AllegationList {
    std::vector<EnumeratedItem> allegations;
    std::vector<EnumeratedItem> requests;

    bool operator==(const AllegationList&) const = default;
};

void to_json(Json& j, const AllegationList& list);
void from_json(const Json& j, AllegationList& list);

/// Splits a reply into "Allegations:" and "Requests:" sections (either
/// order) of numbered or bulleted items, renumbered 1..n in source order.
/// Throws AllegationParseError when neither section is present.
AllegationList parse_allegations_requests(std::string_view reply);

/// The structured prompt: instructions, a worked example, rules, then the
/// main document text truncated to fit `prompt_budget` tokens.
std::string allegation_prompt(std::string_view main_text, std::string_view example_text, std::size_t prompt_budget,
                              const llm::Tokenizer& tokenizer);

/// Extracts the ordered allegations and requests from the main document;
/// an unparseable reply gets one reprompt.
AllegationList extract_allegations_requests(std::string_view main_text, llm::LlmGateway& gateway,
                                            std::string_view example_text);

std::string default_allegation_example();

} // namespace casework::extraction
