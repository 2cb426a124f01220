#include "casework/retrieval.hpp"

#include "casework/error.hpp"
#include "casework/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

namespace casework {

std::string_view to_string(CorpusId corpus) {
    switch (corpus) {
    case CorpusId::Jurisprudence: return "jurisprudence";
    case CorpusId::StatutesFederalLaw: return "statutes_federal_law";
    case CorpusId::InternalCodes: return "internal_codes";
    case CorpusId::CaseDocuments: return "case_documents";
    }
    return "case_documents";
}

CorpusId corpus_from_string(std::string_view s) {
    const std::string lowered = text::to_lower(text::trim(s));
    if (lowered == "jurisprudence") return CorpusId::Jurisprudence;
    if (lowered == "statutes_federal_law" || lowered == "statutesfederallaw" || lowered == "statutes") {
        return CorpusId::StatutesFederalLaw;
    }
    if (lowered == "internal_codes" || lowered == "internalcodes") return CorpusId::InternalCodes;
    if (lowered == "case_documents" || lowered == "casedocuments") return CorpusId::CaseDocuments;
    throw Error(ErrorKind::ParseError, "unknown corpus '" + std::string(s) + "'");
}

} // namespace casework

namespace casework::retrieval {

void to_json(Json& j, const SearchHit& hit) {
    j = Json{{"passage_id", hit.passage_id},
             {"corpus", std::string(to_string(hit.corpus))},
             {"doc_id", hit.doc_id},
             {"bm25_score", hit.bm25_score},
             {"rank", hit.rank}};
    if (hit.rerank_score) {
        j["rerank_score"] = *hit.rerank_score;
    }
}

std::vector<IndexedPassage> chunk_document(CorpusId corpus, const std::string& doc_id, std::string_view content,
                                           const ChunkOptions& options, std::size_t first_index) {
    require(options.window_tokens > options.overlap_tokens, "chunk window must exceed overlap");
    const auto spans = text::token_spans(content);
    std::vector<IndexedPassage> out;
    if (spans.empty()) {
        return out;
    }
    const std::size_t stride = options.window_tokens - options.overlap_tokens;
    std::size_t index = first_index;
    for (std::size_t start = 0;; start += stride) {
        const std::size_t end = std::min(start + options.window_tokens, spans.size());
        IndexedPassage passage;
        char suffix[16];
        std::snprintf(suffix, sizeof(suffix), "#%04zu", index++);
        passage.passage_id = doc_id + suffix;
        passage.corpus = corpus;
        passage.doc_id = doc_id;
        passage.text = std::string(content.substr(spans[start].begin, spans[end - 1].end - spans[start].begin));
        passage.token_count = end - start;
        out.push_back(std::move(passage));
        if (end == spans.size()) {
            break;
        }
    }
    return out;
}

std::vector<double> IdentityReranker::score(std::string_view, std::span<const RerankCandidate> candidates) const {
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
        out.push_back(c.bm25_score);
    }
    return out;
}

std::vector<double> ScriptedReranker::score(std::string_view, std::span<const RerankCandidate> candidates) const {
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
        const auto it = scores_.find(c.passage->passage_id);
        if (it == scores_.end()) {
            throw Error(ErrorKind::NotFound, "no scripted rerank score for " + c.passage->passage_id);
        }
        out.push_back(it->second);
    }
    return out;
}

Bm25Index Bm25Index::build(std::vector<IndexedPassage> passages, Bm25Params params) {
    if (passages.empty()) {
        throw Error(ErrorKind::EmptyCorpus, "cannot build an index without passages");
    }
    Bm25Index index;
    index.params_ = params;
    index.corpus_ = passages.front().corpus;
    index.passages_ = std::move(passages);
    index.term_freqs_.reserve(index.passages_.size());

    double total_length = 0.0;
    for (std::size_t i = 0; i < index.passages_.size(); ++i) {
        auto& passage = index.passages_[i];
        require(passage.corpus == index.corpus_, "passages of one index must share a corpus");
        require(!text::trim(passage.text).empty(), "passage text must be nonempty: " + passage.passage_id);
        if (!index.by_id_.emplace(passage.passage_id, i).second) {
            throw Error(ErrorKind::PreconditionViolation, "duplicate passage id " + passage.passage_id);
        }
        const auto terms = text::tokenize(passage.text);
        passage.token_count = terms.size();
        total_length += static_cast<double>(terms.size());
        std::unordered_map<std::string, std::uint32_t> freqs;
        for (const auto& term : terms) {
            ++freqs[term];
        }
        for (const auto& [term, _] : freqs) {
            index.postings_[term].push_back(static_cast<std::uint32_t>(i));
        }
        index.term_freqs_.push_back(std::move(freqs));
    }
    index.avgdl_ = total_length / static_cast<double>(index.passages_.size());
    return index;
}

std::size_t Bm25Index::document_frequency(const std::string& term) const {
    const auto it = postings_.find(term);
    return it == postings_.end() ? 0 : it->second.size();
}

double Bm25Index::idf(const std::string& term) const {
    const double n = static_cast<double>(passages_.size());
    const double df = static_cast<double>(document_frequency(term));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

const IndexedPassage* Bm25Index::find(std::string_view passage_id) const {
    const auto it = by_id_.find(std::string(passage_id));
    return it == by_id_.end() ? nullptr : &passages_[it->second];
}

double Bm25Index::score_at(std::span<const std::string> query_terms, std::size_t index) const {
    const auto& freqs = term_freqs_[index];
    const double len = static_cast<double>(passages_[index].token_count);
    const double norm = params_.k1 * (1.0 - params_.b + params_.b * len / avgdl_);
    double total = 0.0;
    for (const auto& term : query_terms) {
        const auto it = freqs.find(term);
        if (it == freqs.end()) {
            continue;
        }
        const double tf = static_cast<double>(it->second);
        total += idf(term) * (tf * (params_.k1 + 1.0)) / (tf + norm);
    }
    return total;
}

double Bm25Index::score(std::span<const std::string> query_terms, std::string_view passage_id) const {
    const auto it = by_id_.find(std::string(passage_id));
    if (it == by_id_.end()) {
        throw Error(ErrorKind::NotFound, "unknown passage " + std::string(passage_id));
    }
    return score_at(query_terms, it->second);
}

namespace {

bool id_order(const SearchHit& a, const SearchHit& b) {
    if (a.doc_id != b.doc_id) return a.doc_id < b.doc_id;
    return a.passage_id < b.passage_id;
}

} // namespace

std::vector<SearchHit> Bm25Index::search(std::string_view query, std::size_t k, const Reranker* reranker) const {
    require(k >= 1, "search requires k >= 1");
    const auto terms = text::tokenize(query);
    if (terms.empty()) {
        throw Error(ErrorKind::EmptyQuery, "query has no searchable terms");
    }

    std::set<std::uint32_t> candidates;
    for (const auto& term : terms) {
        if (const auto it = postings_.find(term); it != postings_.end()) {
            candidates.insert(it->second.begin(), it->second.end());
        }
    }

    std::vector<SearchHit> hits;
    hits.reserve(candidates.size());
    for (const auto idx : candidates) {
        const auto& passage = passages_[idx];
        SearchHit hit;
        hit.passage_id = passage.passage_id;
        hit.corpus = passage.corpus;
        hit.doc_id = passage.doc_id;
        hit.bm25_score = score_at(terms, idx);
        hit.text = passage.text;
        hits.push_back(std::move(hit));
    }
    std::sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
        if (a.bm25_score != b.bm25_score) return a.bm25_score > b.bm25_score;
        return id_order(a, b);
    });
    if (hits.size() > k) {
        hits.resize(k);
    }

    if (reranker != nullptr && !hits.empty()) {
        std::vector<RerankCandidate> batch;
        batch.reserve(hits.size());
        for (const auto& hit : hits) {
            batch.push_back({find(hit.passage_id), hit.bm25_score});
        }
        const auto scores = reranker->score(query, batch);
        require(scores.size() == hits.size(), "reranker returned a wrong number of scores");
        for (std::size_t i = 0; i < hits.size(); ++i) {
            hits[i].rerank_score = scores[i];
        }
        std::stable_sort(hits.begin(), hits.end(), [](const SearchHit& a, const SearchHit& b) {
            if (*a.rerank_score != *b.rerank_score) return *a.rerank_score > *b.rerank_score;
            if (a.bm25_score != b.bm25_score) return a.bm25_score > b.bm25_score;
            return id_order(a, b);
        });
    }
    for (std::size_t i = 0; i < hits.size(); ++i) {
        hits[i].rank = i + 1;
    }
    return hits;
}

Json Bm25Index::to_json() const {
    Json passages = Json::array();
    for (const auto& p : passages_) {
        passages.push_back(Json{{"passage_id", p.passage_id}, {"doc_id", p.doc_id}, {"text", p.text}});
    }
    return Json{{"format", "casework-bm25-index"},
                {"version", 1},
                {"corpus", std::string(casework::to_string(corpus_))},
                {"k1", params_.k1},
                {"b", params_.b},
                {"passages", std::move(passages)}};
}

Bm25Index Bm25Index::from_json(const Json& j) {
    if (j.value("format", "") != "casework-bm25-index" || j.value("version", 0) != 1) {
        throw Error(ErrorKind::ParseError, "unsupported index format");
    }
    const CorpusId corpus = corpus_from_string(j.at("corpus").get<std::string>());
    std::vector<IndexedPassage> passages;
    for (const auto& p : j.at("passages")) {
        IndexedPassage passage;
        passage.passage_id = p.at("passage_id").get<std::string>();
        passage.doc_id = p.at("doc_id").get<std::string>();
        passage.text = p.at("text").get<std::string>();
        passage.corpus = corpus;
        passages.push_back(std::move(passage));
    }
    return build(std::move(passages), Bm25Params{j.at("k1").get<double>(), j.at("b").get<double>()});
}

std::vector<IndexedPassage> load_jsonl_corpus(const std::filesystem::path& path, const ChunkOptions& options) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::IoError, "cannot read corpus " + path.string());
    }
    std::vector<IndexedPassage> out;
    std::map<std::string, std::size_t> next_index;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (text::trim(line).empty()) {
            continue;
        }
        Json obj;
        try {
            obj = Json::parse(line);
        } catch (const Json::parse_error& e) {
            throw Error(ErrorKind::ParseError, path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        const CorpusId corpus = corpus_from_string(obj.at("corpus").get<std::string>());
        const std::string doc_id = obj.at("doc_id").get<std::string>();
        auto chunks = chunk_document(corpus, doc_id, obj.at("text").get<std::string>(), options, next_index[doc_id]);
        next_index[doc_id] += chunks.size();
        for (auto& c : chunks) {
            out.push_back(std::move(c));
        }
    }
    return out;
}

CorpusSet::CorpusSet(const CorpusSet& other)
    : indexes_(other.indexes_), reranker_(other.reranker_), search_calls_(0) {}

void CorpusSet::add(std::shared_ptr<const Bm25Index> index) {
    require(index != nullptr, "null index");
    indexes_[index->corpus()] = std::move(index);
}

const Bm25Index& CorpusSet::index(CorpusId corpus) const {
    const auto it = indexes_.find(corpus);
    if (it == indexes_.end()) {
        throw Error(ErrorKind::NotFound, "corpus not indexed: " + std::string(to_string(corpus)));
    }
    return *it->second;
}

std::vector<SearchHit> CorpusSet::search(CorpusId corpus, std::string_view query, std::size_t k) const {
    const Bm25Index& idx = index(corpus);
    ++search_calls_;
    return idx.search(query, k, reranker_.get());
}

} // namespace casework::retrieval
