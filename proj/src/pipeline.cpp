#include "casework/pipeline.hpp"

#include "casework/admissibility.hpp"
#include "casework/digest.hpp"
#include "casework/error.hpp"
#include "casework/info_extraction.hpp"
#include "casework/ingest.hpp"
#include "casework/precautionary.hpp"
#include "casework/retrieval.hpp"
#include "casework/text.hpp"

#include <algorithm>
#include <chrono>
#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

namespace casework::pipeline {

namespace fs = std::filesystem;

std::string_view to_string(Stage s) {
    switch (s) {
    case Stage::Ingest: return "ingest";
    case Stage::BasicInfo: return "basic_info";
    case Stage::Allegations: return "allegations";
    case Stage::Admissibility: return "admissibility";
    case Stage::Periculum: return "periculum";
    case Stage::Fumus: return "fumus";
    case Stage::Recommendations: return "recommendations";
    }
    return "ingest";
}

Stage stage_from_string(std::string_view s) {
    for (const Stage st : kAllStages) {
        if (to_string(st) == s) return st;
    }
    throw Error(ErrorKind::NotFound, "unknown stage '" + std::string(s) + "'");
}

const std::vector<Stage>& stage_dependencies(Stage s) {
    static const std::vector<Stage> none;
    static const std::vector<Stage> ingest_only = {Stage::Ingest};
    static const std::vector<Stage> fumus = {Stage::Ingest, Stage::Allegations};
    static const std::vector<Stage> recommendations = {Stage::BasicInfo, Stage::Allegations, Stage::Admissibility,
                                                       Stage::Periculum, Stage::Fumus};
    switch (s) {
    case Stage::Ingest: return none;
    case Stage::BasicInfo:
    case Stage::Allegations:
    case Stage::Admissibility:
    case Stage::Periculum: return ingest_only;
    case Stage::Fumus: return fumus;
    case Stage::Recommendations: return recommendations;
    }
    return none;
}

std::vector<Stage> upstream_of(Stage s) {
    std::vector<bool> mark(kAllStages.size(), false);
    std::vector<Stage> todo = stage_dependencies(s);
    while (!todo.empty()) {
        const Stage t = todo.back();
        todo.pop_back();
        if (mark[static_cast<std::size_t>(t)]) continue;
        mark[static_cast<std::size_t>(t)] = true;
        for (const Stage u : stage_dependencies(t)) todo.push_back(u);
    }
    std::vector<Stage> out;
    for (const Stage t : kAllStages) {
        if (mark[static_cast<std::size_t>(t)]) out.push_back(t);
    }
    return out;
}

std::vector<Stage> downstream_of(Stage s) {
    std::vector<Stage> out;
    for (const Stage t : kAllStages) {
        if (t == s) {
            out.push_back(t);
            continue;
        }
        const auto up = upstream_of(t);
        if (std::find(up.begin(), up.end(), s) != up.end()) out.push_back(t);
    }
    return out;
}

std::string CaseWorkspace::sanitize(std::string_view case_id) {
    std::string out;
    for (const char c : case_id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                        c == '-' || c == '_';
        out += ok ? c : '_';
    }
    if (out.empty() || out == "." || out == "..") out = "_" + out;
    return out;
}

fs::path CaseWorkspace::stage_file(Stage s) const { return stages_dir() / (std::string(to_string(s)) + ".json"); }

fs::path CaseWorkspace::stage_audit_file(Stage s) const {
    return stages_dir() / (std::string(to_string(s)) + ".audit.jsonl");
}

bool CaseWorkspace::exists() const { return fs::is_regular_file(case_file()); }

std::string CaseWorkspace::case_id() const { return read_json_file(case_file()).at("case_id").get<std::string>(); }

fs::path CaseWorkspace::bundle_path() const {
    return fs::path(read_json_file(case_file()).at("bundle_path").get<std::string>());
}

std::optional<Json> CaseWorkspace::read_stage(Stage s) const {
    if (!fs::is_regular_file(stage_file(s))) return std::nullopt;
    return read_json_file(stage_file(s));
}

WorkspaceLock::WorkspaceLock(const CaseWorkspace& ws) {
    fs::create_directories(ws.dir());
    fd_ = ::open(ws.lock_file().c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) {
        throw Error(ErrorKind::IoError, "cannot open lock file " + ws.lock_file().string());
    }
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw Error(ErrorKind::Locked, "workspace " + ws.dir().string() + " is in use by another writer");
    }
}

WorkspaceLock::~WorkspaceLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

std::string_view to_string(StageStatus s) {
    switch (s) {
    case StageStatus::Ran: return "ran";
    case StageStatus::Skipped: return "skipped";
    case StageStatus::Failed: return "failed";
    case StageStatus::NotRun: return "not_run";
    }
    return "not_run";
}

std::string_view to_string(Freshness f) {
    switch (f) {
    case Freshness::Fresh: return "fresh";
    case Freshness::Stale: return "stale";
    case Freshness::Missing: return "missing";
    }
    return "missing";
}

const StageReport* RunReport::find(Stage s) const {
    const auto it = std::find_if(stages.begin(), stages.end(), [&](const StageReport& r) { return r.stage == s; });
    return it == stages.end() ? nullptr : &*it;
}

Json RunReport::to_json() const {
    Json st = Json::array();
    for (const auto& s : stages) {
        Json e{{"stage", std::string(pipeline::to_string(s.stage))},
               {"status", std::string(pipeline::to_string(s.status))},
               {"duration_ms", s.duration_ms},
               {"requests", s.requests},
               {"tokens_in", s.tokens_in},
               {"tokens_out", s.tokens_out},
               {"estimated_cost", s.estimated_cost}};
        if (!s.error.empty()) e["error"] = s.error;
        st.push_back(std::move(e));
    }
    Json j{{"case_id", case_id}, {"workspace", workspace.string()}, {"stages", std::move(st)},
           {"total_ms", total_ms}, {"ok", ok()}};
    j["failed_stage"] = failed_stage ? Json(std::string(pipeline::to_string(*failed_stage))) : Json(nullptr);
    return j;
}

// ---------------------------------------------------------------------------

struct Pipeline::Context {
    Context(CaseWorkspace w, llm::LlmGateway g) : ws(std::move(w)), gateway(std::move(g)) {}

    CaseWorkspace ws;
    llm::LlmGateway gateway;
    std::optional<std::vector<ingest::ExtractedDocument>> docs;
    std::string main_doc_id;
    std::unique_ptr<retrieval::CorpusSet> corpora;

    const Json& ingest_output() {
        if (!ingest_) {
            const auto env = ws.read_stage(Stage::Ingest);
            if (!env) throw Error(ErrorKind::MissingStage, "stage ingest has no output");
            ingest_ = env->at("output");
        }
        return *ingest_;
    }

    const std::vector<ingest::ExtractedDocument>& documents() {
        if (!docs) {
            const Json& out = ingest_output();
            main_doc_id = out.at("main_doc_id").get<std::string>();
            docs.emplace();
            for (const auto& d : out.at("documents")) {
                docs->push_back(read_json_file(ws.extracted_dir() / d.at("file").get<std::string>())
                                    .get<ingest::ExtractedDocument>());
            }
        }
        return *docs;
    }

    const retrieval::CorpusSet& corpus_set() {
        if (!corpora) {
            corpora = std::make_unique<retrieval::CorpusSet>();
            for (const auto& ix : ingest_output().at("indexes")) {
                corpora->add(std::make_shared<retrieval::Bm25Index>(retrieval::Bm25Index::from_json(
                    read_json_file(ws.indexes_dir() / ix.at("file").get<std::string>()))));
            }
        }
        return *corpora;
    }

    Json stage_output(Stage s) const {
        const auto env = ws.read_stage(s);
        if (!env) throw Error(ErrorKind::MissingStage, "stage " + std::string(to_string(s)) + " has no output");
        return env->at("output");
    }

    void invalidate_ingest() {
        ingest_.reset();
        docs.reset();
        corpora.reset();
    }

private:
    std::optional<Json> ingest_;
};

Pipeline::Pipeline(PipelineConfig config, std::shared_ptr<llm::LlmBackend> backend)
    : config_(std::move(config)), backend_(backend ? std::move(backend) : config_.make_backend()),
      gateway_options_(config_.gateway_options()) {}

CaseWorkspace Pipeline::workspace_for(std::string_view case_id) const {
    return CaseWorkspace(config_.workspace_root / CaseWorkspace::sanitize(case_id));
}

CaseWorkspace Pipeline::open_workspace(const std::string& case_or_dir) const {
    const CaseWorkspace direct{fs::path(case_or_dir)};
    if (direct.exists()) return direct;
    const CaseWorkspace by_id = workspace_for(case_or_dir);
    if (by_id.exists()) return by_id;
    throw Error(ErrorKind::NotFound, "no case workspace for '" + case_or_dir + "'");
}

namespace {

Json gateway_json(const PipelineConfig& c) {
    return Json{{"context_budget_tokens", c.context_budget_tokens},
                {"max_output_tokens", c.max_output_tokens},
                {"temperature", c.temperature}};
}

fs::path sidecar_of(const fs::path& p) {
    fs::path s = p;
    s += ".ocr.txt";
    return s;
}

} // namespace

Json Pipeline::stage_config(Stage stage) const {
    const auto& c = config_;
    switch (stage) {
    case Stage::Ingest: {
        Json corpora = Json::object();
        for (const auto& [id, paths] : c.corpora) {
            Json files = Json::array();
            for (const auto& p : paths) files.push_back(sha256_hex(read_file(p)));
            corpora[std::string(casework::to_string(id))] = std::move(files);
        }
        return Json{{"page_chars", c.page_chars},
                    {"quality_veto_threshold", c.quality_veto_threshold ? Json(*c.quality_veto_threshold) : Json()},
                    {"chunk", {{"window_tokens", c.chunk.window_tokens}, {"overlap_tokens", c.chunk.overlap_tokens}}},
                    {"corpora", std::move(corpora)}};
    }
    case Stage::BasicInfo:
        return Json{{"gateway", gateway_json(c)},
                    {"form_schema", c.form_schema.to_json()},
                    {"crafted_queries", c.crafted_queries},
                    {"page_chars", c.page_chars},
                    {"top_k", c.retrieval_top_k}};
    case Stage::Allegations:
        return Json{{"gateway", gateway_json(c)}, {"allegation_example", c.allegation_example}};
    case Stage::Admissibility:
        return Json{{"gateway", gateway_json(c)},
                    {"max_steps", c.admissibility_max_steps},
                    {"top_k", c.retrieval_top_k},
                    {"page_chars", c.page_chars}};
    case Stage::Periculum:
        return Json{{"gateway", gateway_json(c)},
                    {"keywords", c.periculum.active.keywords},
                    {"query", c.periculum.active.query},
                    {"top_k", c.periculum.active.top_k},
                    {"delay_max_document_calls", c.periculum.delay.max_document_calls},
                    {"delay_batch_size", c.periculum.delay.batch_size}};
    case Stage::Fumus:
        return Json{{"gateway", gateway_json(c)}, {"max_steps", c.fumus_max_steps}, {"top_k", c.retrieval_top_k}};
    case Stage::Recommendations:
        return Json{{"gateway", gateway_json(c)}, {"guidelines", c.guidelines.to_json()}};
    }
    return Json::object();
}

std::string Pipeline::inputs_digest(const CaseWorkspace& ws, Stage stage) const {
    DigestBuilder d;
    d.add("schema_version").add(std::to_string(kSchemaVersion)).add(to_string(stage));
    d.add(canonical_dump(stage_config(stage)));
    if (stage == Stage::Ingest) {
        const fs::path bundle_dir = ws.bundle_path();
        const auto bundle = ingest::load_bundle(bundle_dir);
        d.add(read_file(bundle_dir / "manifest.json"));
        for (const auto& doc : bundle.documents) {
            d.add(doc.doc_id).add(read_file(doc.source_path));
            const fs::path sidecar = sidecar_of(doc.source_path);
            if (fs::is_regular_file(sidecar)) {
                d.add("sidecar").add(read_file(sidecar));
            } else {
                d.add("no-sidecar");
            }
        }
        return d.hex();
    }
    d.add(backend_->fingerprint());
    for (const Stage up : stage_dependencies(stage)) {
        const fs::path file = ws.stage_file(up);
        if (!fs::is_regular_file(file)) {
            throw Error(ErrorKind::MissingStage, "stage " + std::string(to_string(up)) + " has no output");
        }
        d.add(to_string(up)).add(read_file(file));
    }
    return d.hex();
}

Freshness Pipeline::freshness(const CaseWorkspace& ws, Stage stage) const {
    if (!fs::is_regular_file(ws.stage_file(stage))) return Freshness::Missing;
    try {
        const auto env = ws.read_stage(stage);
        if (!env || !env->is_object() || env->value("schema_version", 0) != kSchemaVersion) return Freshness::Stale;
        return env->value("inputs_digest", std::string()) == inputs_digest(ws, stage) ? Freshness::Fresh
                                                                                      : Freshness::Stale;
    } catch (const std::exception&) {
        return Freshness::Stale;
    }
}

void Pipeline::write_audit(const CaseWorkspace& ws, Stage stage, const std::vector<llm::AuditEntry>& entries,
                           bool append) const {
    std::string content;
    if (append && fs::is_regular_file(ws.stage_audit_file(stage))) content = read_file(ws.stage_audit_file(stage));
    for (const auto& e : entries) content += Json(e).dump() + "\n";
    write_file_atomic(ws.stage_audit_file(stage), content);
}

void Pipeline::rebuild_audit_log(const CaseWorkspace& ws) const {
    std::string log;
    for (const Stage s : kAllStages) {
        if (fs::is_regular_file(ws.stage_audit_file(s))) log += read_file(ws.stage_audit_file(s));
    }
    write_file_atomic(ws.audit_log(), log);
}

void Pipeline::run_stage(Context& ctx, Stage stage, const std::string& digest) {
    const CaseWorkspace& ws = ctx.ws;
    llm::LlmGateway gateway = ctx.gateway.with_stage(std::string(to_string(stage)));
    Json output;

    switch (stage) {
    case Stage::Ingest: {
        const auto bundle = ingest::load_bundle(ws.bundle_path());
        ingest::PlainTextExtractor primary;
        ingest::StubOcrExtractor fallback(true);
        ingest::ExtractOptions options;
        options.page_chars = config_.page_chars;
        options.quality_veto_threshold = config_.quality_veto_threshold;
        const auto docs = ingest::extract_all(bundle, primary, fallback, options);

        fs::create_directories(ws.extracted_dir());
        fs::create_directories(ws.indexes_dir());
        Json doc_list = Json::array();
        std::vector<retrieval::IndexedPassage> case_passages;
        for (std::size_t i = 0; i < docs.size(); ++i) {
            const auto& doc = docs[i];
            const auto& raw = bundle.documents[i];
            const std::string file = CaseWorkspace::sanitize(doc.doc_id) + ".json";
            write_json_atomic(ws.extracted_dir() / file, Json(doc));
            Json quality = nullptr;
            if (doc.total_char_count > 0) quality = ingest::extraction_quality(doc);
            doc_list.push_back(Json{
                {"doc_id", doc.doc_id},
                {"file", file},
                {"declared_kind", std::string(ingest::to_string(raw.declared_kind))},
                {"page_count", doc.page_count},
                {"total_char_count", doc.total_char_count},
                {"invalid_char_count", doc.invalid_char_count},
                {"extraction_quality", quality},
                {"extractor_used", std::string(ingest::to_string(doc.extractor_used))},
                {"difficulty", std::string(ingest::to_string(ingest::classify_difficulty(
                                   doc.page_count, raw.has_structured, raw.has_images_or_handwriting)))},
                {"text_sha256", sha256_hex(doc.text)}});
            if (!text::trim(doc.text).empty()) {
                auto chunks = retrieval::chunk_document(CorpusId::CaseDocuments, doc.doc_id, doc.text, config_.chunk);
                std::move(chunks.begin(), chunks.end(), std::back_inserter(case_passages));
            }
        }

        Json index_list = Json::array();
        const auto write_index = [&](const retrieval::Bm25Index& index) {
            const std::string file = std::string(casework::to_string(index.corpus())) + ".json";
            const std::string body = canonical_dump(index.to_json());
            write_file_atomic(ws.indexes_dir() / file, body);
            index_list.push_back(Json{{"corpus", std::string(casework::to_string(index.corpus()))},
                                      {"file", file},
                                      {"passages", index.size()},
                                      {"sha256", sha256_hex(body)}});
        };
        for (const auto& [id, paths] : config_.corpora) {
            std::vector<retrieval::IndexedPassage> passages;
            for (const auto& p : paths) {
                auto loaded = retrieval::load_jsonl_corpus(p, config_.chunk);
                for (auto& passage : loaded) {
                    if (passage.corpus != id) {
                        throw Error(ErrorKind::ConfigError, p.string() + " contains a passage of corpus " +
                                                                std::string(casework::to_string(passage.corpus)));
                    }
                    passages.push_back(std::move(passage));
                }
            }
            write_index(retrieval::Bm25Index::build(std::move(passages)));
        }
        write_index(retrieval::Bm25Index::build(std::move(case_passages)));

        output = Json{{"case_id", bundle.case_id},
                      {"main_doc_id", bundle.main_document().doc_id},
                      {"documents", std::move(doc_list)},
                      {"indexes", std::move(index_list)}};
        break;
    }
    case Stage::BasicInfo: {
        extraction::CaseText case_text;
        case_text.documents = ctx.documents();
        case_text.main_doc_id = ctx.main_doc_id;
        extraction::BasicInfoOptions options;
        options.page_chars = config_.page_chars;
        options.top_k = config_.retrieval_top_k;
        options.crafted_queries = config_.crafted_queries;
        output = extraction::extract_basic_info(case_text, config_.form_schema, ctx.corpus_set(), gateway, options);
        break;
    }
    case Stage::Allegations: {
        const auto& docs = ctx.documents();
        const auto main = std::find_if(docs.begin(), docs.end(), [&](const auto& d) { return d.doc_id == ctx.main_doc_id; });
        output = extraction::extract_allegations_requests(main->text, gateway, config_.allegation_example);
        break;
    }
    case Stage::Admissibility: {
        const auto& docs = ctx.documents();
        const auto main = std::find_if(docs.begin(), docs.end(), [&](const auto& d) { return d.doc_id == ctx.main_doc_id; });
        admissibility::CaseContext context{ws.case_id(), ingest::first_pages(main->text, 1, config_.page_chars)};
        admissibility::ExamineOptions options{config_.admissibility_max_steps, config_.retrieval_top_k};
        output = admissibility::examine_all(context, ctx.corpus_set(), gateway, options);
        break;
    }
    case Stage::Periculum:
        output = precautionary::analyze_periculum(ctx.documents(), ctx.corpus_set(), gateway, config_.periculum);
        break;
    case Stage::Fumus: {
        const auto allegations = ctx.stage_output(Stage::Allegations).get<extraction::AllegationList>();
        precautionary::FumusOptions options{config_.fumus_max_steps, config_.retrieval_top_k};
        output = precautionary::classify_fumus(allegations, ctx.corpus_set(), gateway, options);
        break;
    }
    case Stage::Recommendations: {
        recommendations::StageOutputs outputs;
        outputs.case_id = ws.case_id();
        for (const Stage up : stage_dependencies(Stage::Recommendations)) {
            outputs.outputs[std::string(to_string(up))] = ctx.stage_output(up);
        }
        std::vector<recommendations::InstructionSection> sections;
        for (const auto id : recommendations::kAllSections) {
            sections.push_back(recommendations::generate_section(id, outputs, config_.guidelines, gateway));
        }
        const auto draft =
            recommendations::assemble_instruction(outputs.case_id, std::move(sections), config_.resolve_generated_at());
        write_file_atomic(ws.instruction_md(), draft.to_markdown());
        output = draft.to_json();
        write_json_atomic(ws.instruction_json(), output);
        break;
    }
    }

    write_audit(ws, stage, gateway.audit_entries(to_string(stage)), false);
    write_json_atomic(ws.stage_file(stage), Json{{"schema_version", kSchemaVersion},
                                                 {"stage", std::string(to_string(stage))},
                                                 {"inputs_digest", digest},
                                                 {"output", std::move(output)}});
    rebuild_audit_log(ws);
    if (stage == Stage::Ingest) ctx.invalidate_ingest();
}

StageReport Pipeline::execute(Context& ctx, Stage stage) {
    StageReport report;
    report.stage = stage;
    const auto start = std::chrono::steady_clock::now();
    const std::size_t mark = ctx.gateway.audit_mark();
    try {
        fs::create_directories(ctx.ws.stages_dir());
        run_stage(ctx, stage, inputs_digest(ctx.ws, stage));
        report.status = StageStatus::Ran;
    } catch (const std::exception& e) {
        report.status = StageStatus::Failed;
        report.error = e.what();
    }
    for (const auto& entry : ctx.gateway.audit_entries_since(mark)) {
        ++report.requests;
        report.tokens_in += entry.tokens_in;
        report.tokens_out += entry.tokens_out;
    }
    report.estimated_cost = static_cast<double>(report.tokens_in) / 1000.0 * config_.pricing.input_per_1k_tokens +
                            static_cast<double>(report.tokens_out) / 1000.0 * config_.pricing.output_per_1k_tokens;
    report.duration_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    return report;
}

CaseWorkspace Pipeline::init_workspace(const fs::path& bundle_dir, std::string& case_id) const {
    const auto bundle = ingest::load_bundle(bundle_dir);
    case_id = bundle.case_id;
    CaseWorkspace ws = workspace_for(case_id);
    fs::create_directories(ws.dir());
    write_json_atomic(ws.case_file(),
                      Json{{"case_id", case_id}, {"bundle_path", fs::weakly_canonical(fs::absolute(bundle_dir)).string()}});
    return ws;
}

namespace {

StageReport stage_report(Stage stage, StageStatus status) {
    StageReport r;
    r.stage = stage;
    r.status = status;
    return r;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

} // namespace

RunReport Pipeline::run_case(const fs::path& bundle_dir, const RunOptions& options) {
    std::string case_id;
    const CaseWorkspace ws = init_workspace(bundle_dir, case_id);
    return continue_case(ws, options);
}

RunReport Pipeline::continue_case(const CaseWorkspace& ws, const RunOptions& options) {
    const auto start = std::chrono::steady_clock::now();
    WorkspaceLock lock(ws);
    Context ctx(ws, llm::LlmGateway(backend_, gateway_options_));
    RunReport report;
    report.case_id = ws.case_id();
    report.workspace = ws.dir();
    bool halted = false;
    for (const Stage stage : kAllStages) {
        if (halted) {
            report.stages.push_back(stage_report(stage, StageStatus::NotRun));
            continue;
        }
        const auto stage_start = std::chrono::steady_clock::now();
        if (freshness(ws, stage) == Freshness::Fresh) {
            StageReport skipped = stage_report(stage, StageStatus::Skipped);
            skipped.duration_ms = elapsed_ms(stage_start);
            report.stages.push_back(skipped);
        } else {
            StageReport r = execute(ctx, stage);
            r.duration_ms = elapsed_ms(stage_start);
            if (r.status == StageStatus::Failed) {
                report.failed_stage = stage;
                halted = true;
            }
            report.stages.push_back(std::move(r));
        }
        if (options.stop_after && *options.stop_after == stage) halted = true;
    }
    // A crash after a stage file landed but before the log was rebuilt
    // leaves every stage fresh and the log behind; catch it up here.
    if (fs::is_directory(ws.stages_dir())) rebuild_audit_log(ws);
    report.total_ms = elapsed_ms(start);
    return report;
}

RunReport Pipeline::resume_stage(const CaseWorkspace& ws, Stage stage) {
    const auto start = std::chrono::steady_clock::now();
    WorkspaceLock lock(ws);
    std::vector<std::string> stale;
    for (const Stage up : upstream_of(stage)) {
        const Freshness f = freshness(ws, up);
        if (f != Freshness::Fresh) stale.push_back(std::string(to_string(up)) + " (" + std::string(to_string(f)) + ")");
    }
    if (!stale.empty()) {
        throw Error(ErrorKind::StaleUpstream, "cannot resume " + std::string(to_string(stage)) +
                                                  "; upstream not fresh: " + text::join(stale, ", "));
    }
    Context ctx(ws, llm::LlmGateway(backend_, gateway_options_));
    RunReport report;
    report.case_id = ws.case_id();
    report.workspace = ws.dir();
    const auto cascade = downstream_of(stage);
    bool halted = false;
    for (const Stage s : kAllStages) {
        if (std::find(cascade.begin(), cascade.end(), s) == cascade.end()) {
            report.stages.push_back(stage_report(s, StageStatus::Skipped));
            continue;
        }
        if (halted) {
            report.stages.push_back(stage_report(s, StageStatus::NotRun));
            continue;
        }
        StageReport r = execute(ctx, s);
        if (r.status == StageStatus::Failed) {
            report.failed_stage = s;
            halted = true;
        }
        report.stages.push_back(std::move(r));
    }
    report.total_ms = elapsed_ms(start);
    return report;
}

RunReport Pipeline::regenerate_section(const CaseWorkspace& ws, recommendations::SectionId section) {
    const auto start = std::chrono::steady_clock::now();
    WorkspaceLock lock(ws);
    auto envelope = ws.read_stage(Stage::Recommendations);
    if (!envelope) {
        throw Error(ErrorKind::MissingStage, "no instruction draft yet; run the recommendations stage first");
    }
    Context ctx(ws, llm::LlmGateway(backend_, gateway_options_));
    llm::LlmGateway gateway = ctx.gateway.with_stage(std::string(to_string(Stage::Recommendations)));

    RunReport report;
    report.case_id = ws.case_id();
    report.workspace = ws.dir();
    StageReport r = stage_report(Stage::Recommendations, StageStatus::Ran);
    try {
        recommendations::StageOutputs outputs;
        outputs.case_id = report.case_id;
        for (const Stage up : stage_dependencies(Stage::Recommendations)) {
            if (const auto env = ws.read_stage(up)) outputs.outputs[std::string(to_string(up))] = env->at("output");
        }
        const auto draft = recommendations::InstructionDraft::from_json(envelope->at("output"));
        const auto updated = recommendations::regenerate_section(draft, section, outputs, config_.guidelines, gateway);
        write_file_atomic(ws.instruction_md(), updated.to_markdown());
        write_json_atomic(ws.instruction_json(), updated.to_json());
        write_audit(ws, Stage::Recommendations, gateway.audit_entries(), true);
        (*envelope)["output"] = updated.to_json();
        write_json_atomic(ws.stage_file(Stage::Recommendations), *envelope);
        rebuild_audit_log(ws);
    } catch (const std::exception& e) {
        r.status = StageStatus::Failed;
        r.error = e.what();
        report.failed_stage = Stage::Recommendations;
    }
    for (const auto& entry : gateway.audit_entries()) {
        ++r.requests;
        r.tokens_in += entry.tokens_in;
        r.tokens_out += entry.tokens_out;
    }
    r.estimated_cost = static_cast<double>(r.tokens_in) / 1000.0 * config_.pricing.input_per_1k_tokens +
                       static_cast<double>(r.tokens_out) / 1000.0 * config_.pricing.output_per_1k_tokens;
    r.duration_ms = elapsed_ms(start);
    report.stages.push_back(r);
    report.total_ms = elapsed_ms(start);
    return report;
}

} // namespace casework::pipeline
