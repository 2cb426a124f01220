#pragma once

#include "casework/error.hpp"
#include "casework/json_io.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace casework::ingest {

enum class DocumentKind { Main, Supporting };
enum class ExtractorUsed { PrimaryText, OcrFallback };
enum class Searchability { Searchable, Unsearchable };
enum class DifficultyClass { Easy, Medium, Hard };

std::string_view to_string(DocumentKind kind);
std::string_view to_string(ExtractorUsed used);
std::string_view to_string(DifficultyClass difficulty);
DocumentKind document_kind_from_string(std::string_view s);
ExtractorUsed extractor_used_from_string(std::string_view s);

struct RawDocument {
    std::string doc_id;
    std::filesystem::path source_path;
    std::uint64_t byte_size = 0;
    DocumentKind declared_kind = DocumentKind::Supporting;
    // Content flags feeding the difficulty rubric; declared in the manifest.
    bool has_structured = false;
    bool has_images_or_handwriting = false;
};

struct ExtractedDocument {
    std::string doc_id;
    std::string text;
    std::size_t page_count = 0;
    std::size_t invalid_char_count = 0;
    std::size_t total_char_count = 0;
    ExtractorUsed extractor_used = ExtractorUsed::PrimaryText;
};

void to_json(Json& j, const ExtractedDocument& doc);
void from_json(const Json& j, ExtractedDocument& doc);

/// A case as submitted: one main document (the representação) plus evidence.
struct CaseBundle {
    std::string case_id;
    std::filesystem::path root;
    std::vector<RawDocument> documents;

    const RawDocument& main_document() const;
};

/// Reads `<dir>/manifest.json`. Rejects duplicate ids and anything other
/// than exactly one Main document.
CaseBundle load_bundle(const std::filesystem::path& dir);

class TextExtractor {
public:
    virtual ~TextExtractor() = default;
    virtual std::string name() const = 0;
    /// Returns the extracted text, possibly empty. Throws on hard failure.
    virtual std::string extract(const RawDocument& doc) = 0;
    /// Whether concurrent extract() calls are allowed. Callers serialize
    /// access to extractors that return false.
    virtual bool concurrent_safe() const { return true; }
};

/// Reads documents that carry a text layer (plain text, markdown, csv...).
/// Formats without one (scans, images) yield empty text, which is what
/// routes them to the OCR fallback.
class PlainTextExtractor final : public TextExtractor {
public:
    std::string name() const override { return "plain-text"; }
    std::string extract(const RawDocument& doc) override;
};

/// Stand-in for a real OCR service. Serves text registered per doc_id, or
/// a `<source>.ocr.txt` sidecar next to the document when `use_sidecars`.
class StubOcrExtractor final : public TextExtractor {
public:
    explicit StubOcrExtractor(bool use_sidecars = true, bool concurrent_safe = false)
        : use_sidecars_(use_sidecars), concurrent_safe_(concurrent_safe) {}

    void set_text(std::string doc_id, std::string text) { texts_[std::move(doc_id)] = std::move(text); }

    std::string name() const override { return "ocr-stub"; }
    std::string extract(const RawDocument& doc) override;
    bool concurrent_safe() const override { return concurrent_safe_; }

private:
    std::map<std::string, std::string> texts_;
    bool use_sidecars_;
    bool concurrent_safe_;
};

class ExtractionFailure : public Error {
public:
    ExtractionFailure(std::string doc_id, std::string primary_cause, std::string fallback_cause);

    const std::string& doc_id() const { return doc_id_; }
    const std::string& primary_cause() const { return primary_cause_; }
    const std::string& fallback_cause() const { return fallback_cause_; }

private:
    std::string doc_id_;
    std::string primary_cause_;
    std::string fallback_cause_;
};

struct ExtractOptions {
    std::size_t page_chars = 3000;
    // Nonempty primary output whose invalid-char ratio exceeds this goes to
    // the fallback as well. Unset means primary output is never vetoed.
    std::optional<double> quality_veto_threshold;
};

Searchability classify_searchability(const RawDocument& doc, std::string_view probe_text);

ExtractedDocument extract_text(const RawDocument& doc, TextExtractor& primary, TextExtractor& fallback,
                               const ExtractOptions& options = {});

/// Extracts every bundle document in manifest order. Documents are processed
/// concurrently; extractors that are not concurrent_safe are serialized.
std::vector<ExtractedDocument> extract_all(const CaseBundle& bundle, TextExtractor& primary,
                                           TextExtractor& fallback, const ExtractOptions& options = {});

/// invalid / total. Throws QualityUndefined for an empty document.
double extraction_quality(const ExtractedDocument& doc);

DifficultyClass classify_difficulty(std::size_t page_count, bool has_structured, bool has_images_or_handwriting);

/// Form feeds delimit pages when present; otherwise one page per
/// `page_chars` code points, minimum 1 for nonempty text.
std::size_t count_pages(std::string_view text, std::size_t page_chars);

/// The first `n` pages of `text` under the same page rule.
std::string first_pages(std::string_view text, std::size_t n, std::size_t page_chars);

} // namespace casework::ingest
