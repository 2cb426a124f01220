#pragma once

#include "casework/json_io.hpp"

#include <array>
#include <atomic>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace casework {

/// The four searchable collections: three court-wide corpora plus the
/// documents of the case under analysis.
enum class CorpusId { Jurisprudence, StatutesFederalLaw, InternalCodes, CaseDocuments };

inline constexpr std::array<CorpusId, 4> kAllCorpora = {
    CorpusId::Jurisprudence, CorpusId::StatutesFederalLaw, CorpusId::InternalCodes, CorpusId::CaseDocuments};

/// snake_case wire name ("jurisprudence", "statutes_federal_law", ...).
std::string_view to_string(CorpusId corpus);
/// Accepts the wire name or the enum spelling; throws ParseError otherwise.
CorpusId corpus_from_string(std::string_view s);

} // namespace casework

namespace casework::retrieval {

struct IndexedPassage {
    std::string passage_id;
    CorpusId corpus = CorpusId::CaseDocuments;
    std::string doc_id;
    std::string text;
    std::size_t token_count = 0;
};

struct SearchHit {
    std::string passage_id;
    CorpusId corpus = CorpusId::CaseDocuments;
    std::string doc_id;
    double bm25_score = 0.0;
    std::optional<double> rerank_score;
    std::size_t rank = 0;
    std::string text;
};

void to_json(Json& j, const SearchHit& hit);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct ChunkOptions {
    std::size_t window_tokens = 512;
    std::size_t overlap_tokens = 128;
};

/// Splits a document into overlapping token windows. Passage ids are
/// `<doc_id>#<nnnn>`, numbered from `first_index`.
std::vector<IndexedPassage> chunk_document(CorpusId corpus, const std::string& doc_id, std::string_view text,
                                           const ChunkOptions& options = {}, std::size_t first_index = 0);

struct RerankCandidate {
    const IndexedPassage* passage = nullptr;
    double bm25_score = 0.0;
};

class Reranker {
public:
    virtual ~Reranker() = default;
    virtual std::string name() const = 0;
    /// One score per candidate, higher is better.
    virtual std::vector<double> score(std::string_view query, std::span<const RerankCandidate> candidates) const = 0;
};

/// Passes BM25 scores through unchanged.
class IdentityReranker final : public Reranker {
public:
    std::string name() const override { return "identity"; }
    std::vector<double> score(std::string_view query, std::span<const RerankCandidate> candidates) const override;
};

/// Fixed scores per passage id. A candidate without a scripted score is an
/// error, never a silent default.
class ScriptedReranker final : public Reranker {
public:
    explicit ScriptedReranker(std::map<std::string, double> scores) : scores_(std::move(scores)) {}
    std::string name() const override { return "scripted"; }
    std::vector<double> score(std::string_view query, std::span<const RerankCandidate> candidates) const override;

private:
    std::map<std::string, double> scores_;
};

/// Okapi BM25 over one corpus. Immutable after build; safe for any number
/// of concurrent readers.
class Bm25Index {
public:
    static Bm25Index build(std::vector<IndexedPassage> passages, Bm25Params params = {});

    CorpusId corpus() const { return corpus_; }
    const Bm25Params& params() const { return params_; }
    std::size_t size() const { return passages_.size(); }
    double average_length() const { return avgdl_; }
    std::size_t document_frequency(const std::string& term) const;
    double idf(const std::string& term) const;
    const std::vector<IndexedPassage>& passages() const { return passages_; }
    const IndexedPassage* find(std::string_view passage_id) const;

    /// Sum over query terms (duplicates included) of
    /// IDF(t) * tf*(k1+1) / (tf + k1*(1 - b + b*len/avgdl)).
    double score(std::span<const std::string> query_terms, std::string_view passage_id) const;

    /// Passages sharing at least one term with the query, best first.
    /// Ties break on (doc_id, passage_id) ascending.
    std::vector<SearchHit> search(std::string_view query, std::size_t k, const Reranker* reranker = nullptr) const;

    Json to_json() const;
    static Bm25Index from_json(const Json& j);

private:
    double score_at(std::span<const std::string> query_terms, std::size_t index) const;

    CorpusId corpus_ = CorpusId::CaseDocuments;
    Bm25Params params_;
    std::vector<IndexedPassage> passages_;
    std::vector<std::unordered_map<std::string, std::uint32_t>> term_freqs_;
    std::unordered_map<std::string, std::vector<std::uint32_t>> postings_;
    std::unordered_map<std::string, std::size_t> by_id_;
    double avgdl_ = 0.0;
};

/// Reads a JSON-lines corpus, one {corpus, doc_id, text} object per line,
/// chunking long texts into passages.
std::vector<IndexedPassage> load_jsonl_corpus(const std::filesystem::path& path, const ChunkOptions& options = {});

/// The per-case search surface handed to agents: one index per corpus plus
/// an optional reranking stage.
class CorpusSet {
public:
    CorpusSet() = default;
    CorpusSet(const CorpusSet& other);
    CorpusSet& operator=(const CorpusSet&) = delete;

    void add(std::shared_ptr<const Bm25Index> index);
    void set_reranker(std::shared_ptr<const Reranker> reranker) { reranker_ = std::move(reranker); }
    bool has(CorpusId corpus) const { return indexes_.count(corpus) > 0; }
    const Bm25Index& index(CorpusId corpus) const;

    /// Throws NotFound for an unregistered corpus and EmptyQuery for a
    /// query without terms.
    std::vector<SearchHit> search(CorpusId corpus, std::string_view query, std::size_t k) const;
    std::size_t search_calls() const { return search_calls_.load(); }

private:
    std::map<CorpusId, std::shared_ptr<const Bm25Index>> indexes_;
    std::shared_ptr<const Reranker> reranker_;
    mutable std::atomic<std::size_t> search_calls_{0};
};

} // namespace casework::retrieval
