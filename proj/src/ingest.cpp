#include "casework/ingest.hpp"

#include "casework/text.hpp"

#include <algorithm>
#include <future>
#include <mutex>
#include <set>

namespace fs = std::filesystem;

namespace casework::ingest {

std::string_view to_string(DocumentKind kind) {
    return kind == DocumentKind::Main ? "Main" : "Supporting";
}

std::string_view to_string(ExtractorUsed used) {
    return used == ExtractorUsed::PrimaryText ? "PrimaryText" : "OcrFallback";
}

std::string_view to_string(DifficultyClass difficulty) {
    switch (difficulty) {
    case DifficultyClass::Easy: return "Easy";
    case DifficultyClass::Medium: return "Medium";
    case DifficultyClass::Hard: return "Hard";
    }
    return "Medium";
}

DocumentKind document_kind_from_string(std::string_view s) {
    if (s == "Main") return DocumentKind::Main;
    if (s == "Supporting") return DocumentKind::Supporting;
    throw Error(ErrorKind::ParseError, "unknown declared_kind '" + std::string(s) + "'");
}

ExtractorUsed extractor_used_from_string(std::string_view s) {
    if (s == "PrimaryText") return ExtractorUsed::PrimaryText;
    if (s == "OcrFallback") return ExtractorUsed::OcrFallback;
    throw Error(ErrorKind::ParseError, "unknown extractor_used '" + std::string(s) + "'");
}

void to_json(Json& j, const ExtractedDocument& doc) {
    j = Json{{"doc_id", doc.doc_id},
             {"text", doc.text},
             {"page_count", doc.page_count},
             {"invalid_char_count", doc.invalid_char_count},
             {"total_char_count", doc.total_char_count},
             {"extractor_used", std::string(to_string(doc.extractor_used))}};
}

void from_json(const Json& j, ExtractedDocument& doc) {
    doc.doc_id = j.at("doc_id").get<std::string>();
    doc.text = j.at("text").get<std::string>();
    doc.page_count = j.at("page_count").get<std::size_t>();
    doc.invalid_char_count = j.at("invalid_char_count").get<std::size_t>();
    doc.total_char_count = j.at("total_char_count").get<std::size_t>();
    doc.extractor_used = extractor_used_from_string(j.at("extractor_used").get<std::string>());
}

const RawDocument& CaseBundle::main_document() const {
    const auto it = std::find_if(documents.begin(), documents.end(),
                                 [](const RawDocument& d) { return d.declared_kind == DocumentKind::Main; });
    if (it == documents.end()) {
        throw Error(ErrorKind::PreconditionViolation, "bundle has no Main document");
    }
    return *it;
}

CaseBundle load_bundle(const fs::path& dir) {
    const fs::path manifest_path = dir / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw Error(ErrorKind::IoError, "missing manifest: " + manifest_path.string());
    }
    const Json manifest = read_json_file(manifest_path);

    CaseBundle bundle;
    bundle.root = dir;
    bundle.case_id = manifest.value("case_id", dir.filename().string());
    if (bundle.case_id.empty()) {
        throw Error(ErrorKind::PreconditionViolation, "manifest case_id is empty");
    }
    if (!manifest.contains("documents") || !manifest["documents"].is_array()) {
        throw Error(ErrorKind::ParseError, "manifest has no documents array");
    }

    std::set<std::string> seen;
    std::size_t main_count = 0;
    for (const auto& entry : manifest["documents"]) {
        RawDocument doc;
        doc.doc_id = entry.at("doc_id").get<std::string>();
        doc.source_path = dir / entry.at("path").get<std::string>();
        doc.declared_kind = document_kind_from_string(entry.value("declared_kind", "Supporting"));
        doc.has_structured = entry.value("has_structured", false);
        doc.has_images_or_handwriting = entry.value("has_images_or_handwriting", false);
        if (doc.doc_id.empty()) {
            throw Error(ErrorKind::PreconditionViolation, "empty doc_id in manifest");
        }
        if (!seen.insert(doc.doc_id).second) {
            throw Error(ErrorKind::PreconditionViolation, "duplicate doc_id '" + doc.doc_id + "'");
        }
        std::error_code ec;
        const auto size = fs::file_size(doc.source_path, ec);
        if (ec) {
            throw Error(ErrorKind::IoError, "cannot stat " + doc.source_path.string());
        }
        doc.byte_size = size;
        if (doc.declared_kind == DocumentKind::Main) {
            ++main_count;
        }
        bundle.documents.push_back(std::move(doc));
    }
    if (main_count != 1) {
        throw Error(ErrorKind::PreconditionViolation,
                    "manifest must declare exactly one Main document, found " + std::to_string(main_count));
    }
    return bundle;
}

namespace {

bool has_text_layer(const fs::path& path) {
    static const std::set<std::string> kTextExtensions = {".txt", ".text", ".md", ".csv", ".json", ".xml", ".html", ".htm"};
    return kTextExtensions.count(text::to_lower(path.extension().string())) > 0;
}

} // namespace

std::string PlainTextExtractor::extract(const RawDocument& doc) {
    if (!has_text_layer(doc.source_path)) {
        if (!fs::exists(doc.source_path)) {
            throw Error(ErrorKind::IoError, "cannot read " + doc.source_path.string());
        }
        return {};
    }
    return read_file(doc.source_path);
}

std::string StubOcrExtractor::extract(const RawDocument& doc) {
    if (const auto it = texts_.find(doc.doc_id); it != texts_.end()) {
        return it->second;
    }
    if (use_sidecars_) {
        fs::path sidecar = doc.source_path;
        sidecar += ".ocr.txt";
        if (fs::exists(sidecar)) {
            return read_file(sidecar);
        }
    }
    throw Error(ErrorKind::ExtractionFailed, "no OCR output available for '" + doc.doc_id + "'");
}

ExtractionFailure::ExtractionFailure(std::string doc_id, std::string primary_cause, std::string fallback_cause)
    : Error(ErrorKind::ExtractionFailed,
            "'" + doc_id + "': primary: " + primary_cause + "; fallback: " + fallback_cause),
      doc_id_(std::move(doc_id)),
      primary_cause_(std::move(primary_cause)),
      fallback_cause_(std::move(fallback_cause)) {}

Searchability classify_searchability(const RawDocument& doc, std::string_view probe_text) {
    if (!doc.source_path.empty()) {
        std::error_code ec;
        if (!fs::is_regular_file(doc.source_path, ec)) {
            throw Error(ErrorKind::IoError, "unreadable document " + doc.source_path.string());
        }
    }
    return text::char_stats(probe_text).searchable == 0 ? Searchability::Unsearchable : Searchability::Searchable;
}

namespace {

ExtractedDocument make_extracted(const RawDocument& doc, std::string text_content, ExtractorUsed used,
                                 const text::CharStats& stats, std::size_t page_chars) {
    ExtractedDocument out;
    out.doc_id = doc.doc_id;
    out.page_count = count_pages(text_content, page_chars);
    out.invalid_char_count = stats.invalid;
    out.total_char_count = stats.total;
    out.extractor_used = used;
    out.text = std::move(text_content);
    return out;
}

} // namespace

ExtractedDocument extract_text(const RawDocument& doc, TextExtractor& primary, TextExtractor& fallback,
                               const ExtractOptions& options) {
    std::string primary_cause;
    try {
        std::string content = primary.extract(doc);
        const auto stats = text::char_stats(content);
        if (stats.searchable > 0) {
            const double ratio = static_cast<double>(stats.invalid) / static_cast<double>(stats.total);
            if (!options.quality_veto_threshold || ratio <= *options.quality_veto_threshold) {
                return make_extracted(doc, std::move(content), ExtractorUsed::PrimaryText, stats, options.page_chars);
            }
            primary_cause = "invalid-character ratio " + std::to_string(ratio) + " above veto threshold";
        } else {
            primary_cause = "zero searchable characters";
        }
    } catch (const std::exception& e) {
        primary_cause = e.what();
    }

    std::string fallback_cause;
    try {
        std::string content = fallback.extract(doc);
        const auto stats = text::char_stats(content);
        if (stats.searchable > 0) {
            return make_extracted(doc, std::move(content), ExtractorUsed::OcrFallback, stats, options.page_chars);
        }
        fallback_cause = "zero searchable characters";
    } catch (const std::exception& e) {
        fallback_cause = e.what();
    }
    throw ExtractionFailure(doc.doc_id, primary.name() + ": " + primary_cause, fallback.name() + ": " + fallback_cause);
}

namespace {

// Forwards to an extractor, holding a lock when it is not concurrent-safe.
class GuardedExtractor final : public TextExtractor {
public:
    explicit GuardedExtractor(TextExtractor& inner) : inner_(inner) {}

    std::string name() const override { return inner_.name(); }

    std::string extract(const RawDocument& doc) override {
        if (inner_.concurrent_safe()) {
            return inner_.extract(doc);
        }
        std::lock_guard lock(mutex_);
        return inner_.extract(doc);
    }

private:
    TextExtractor& inner_;
    std::mutex mutex_;
};

} // namespace

std::vector<ExtractedDocument> extract_all(const CaseBundle& bundle, TextExtractor& primary,
                                           TextExtractor& fallback, const ExtractOptions& options) {
    GuardedExtractor guarded_primary(primary);
    GuardedExtractor guarded_fallback(fallback);
    std::vector<std::future<ExtractedDocument>> pending;
    pending.reserve(bundle.documents.size());
    for (const auto& doc : bundle.documents) {
        pending.push_back(std::async(std::launch::async, [&, doc_ptr = &doc] {
            return extract_text(*doc_ptr, guarded_primary, guarded_fallback, options);
        }));
    }
    std::vector<ExtractedDocument> out;
    out.reserve(pending.size());
    // get() in manifest order; the first failure propagates after all
    // tasks were started, and the futures' destructors join the rest.
    for (auto& f : pending) {
        out.push_back(f.get());
    }
    return out;
}

double extraction_quality(const ExtractedDocument& doc) {
    if (doc.total_char_count == 0) {
        throw Error(ErrorKind::QualityUndefined, "document '" + doc.doc_id + "' has no characters");
    }
    return static_cast<double>(doc.invalid_char_count) / static_cast<double>(doc.total_char_count);
}

DifficultyClass classify_difficulty(std::size_t page_count, bool has_structured, bool has_images_or_handwriting) {
    if (page_count > 25) {
        return DifficultyClass::Hard;
    }
    if (page_count <= 10 && !has_structured && !has_images_or_handwriting) {
        return DifficultyClass::Easy;
    }
    // Includes 11-25 page documents without structured content, which the
    // rubric leaves unassigned.
    return DifficultyClass::Medium;
}

std::size_t count_pages(std::string_view text_content, std::size_t page_chars) {
    if (text_content.empty()) {
        return 0;
    }
    if (text_content.find('\f') != std::string_view::npos) {
        return static_cast<std::size_t>(std::count(text_content.begin(), text_content.end(), '\f')) + 1;
    }
    const std::size_t chars = text::code_point_count(text_content);
    return std::max<std::size_t>(1, (chars + page_chars - 1) / page_chars);
}

std::string first_pages(std::string_view text_content, std::size_t n, std::size_t page_chars) {
    if (text_content.find('\f') != std::string_view::npos) {
        std::size_t pos = 0;
        for (std::size_t page = 0; page < n; ++page) {
            const auto next = text_content.find('\f', pos);
            if (next == std::string_view::npos) {
                return std::string(text_content);
            }
            pos = next + 1;
        }
        return std::string(text_content.substr(0, pos - 1));
    }
    return std::string(text_content.substr(0, text::prefix_bytes_for_code_points(text_content, n * page_chars)));
}

} // namespace casework::ingest
