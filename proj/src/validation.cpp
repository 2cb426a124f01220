#include "casework/validation.hpp"

#include "casework/error.hpp"
#include "casework/text.hpp"

#include <algorithm>

namespace casework::validation {

std::string_view to_string(PrecautionaryCriterion c) {
    switch (c) {
    case PrecautionaryCriterion::Periculum: return "Periculum";
    case PrecautionaryCriterion::ReversePericulum: return "ReversePericulum";
    case PrecautionaryCriterion::Fumus: return "Fumus";
    }
    return "Periculum";
}

PrecautionaryCriterion precautionary_criterion_from_string(std::string_view s) {
    for (const auto c : kPrecautionaryCriteria) {
        if (to_string(c) == s) return c;
    }
    throw Error(ErrorKind::ParseError, "unknown precautionary criterion '" + std::string(s) + "'");
}

std::string_view to_string(PrecautionaryValue v) {
    switch (v) {
    case PrecautionaryValue::Dismissed: return "Dismissed";
    case PrecautionaryValue::Configured: return "Configured";
    case PrecautionaryValue::Inconclusive: return "Inconclusive";
    case PrecautionaryValue::NotAnalyzed: return "NotAnalyzed";
    }
    return "NotAnalyzed";
}

PrecautionaryValue precautionary_value_from_string(std::string_view s) {
    for (const auto v : {PrecautionaryValue::Dismissed, PrecautionaryValue::Configured,
                         PrecautionaryValue::Inconclusive, PrecautionaryValue::NotAnalyzed}) {
        if (to_string(v) == s) return v;
    }
    throw Error(ErrorKind::ParseError, "unknown precautionary value '" + std::string(s) + "'");
}

ValidationConfig ValidationConfig::defaults() {
    ValidationConfig c;
    c.headers = {
        {SectionId::BasicInfo, {"Basic Information", "Informações Básicas", "Informacoes Basicas"}},
        {SectionId::ClaimsRequests, {"Claims and Requests", "Alegações e Pedidos", "Alegacoes e Pedidos"}},
        {SectionId::Admissibility, {"Admissibility Examination", "Exame de Admissibilidade", "Admissibilidade"}},
        {SectionId::Precautionary,
         {"Precautionary Measure Analysis", "Análise da Medida Cautelar", "Analise da Medida Cautelar",
          "Medida Cautelar"}},
        {SectionId::Recommendations, {"Recommendations", "Proposta de Encaminhamento", "Recomendações"}},
    };
    c.admissibility_names = {
        {AdmissibilityCriterion::Legitimacy, {"Legitimacy", "Legitimidade"}},
        {AdmissibilityCriterion::Competency, {"Competency", "Competência", "Competencia"}},
        {AdmissibilityCriterion::ExistenceOfEvidence,
         {"Existence of Evidence", "Evidence", "Existência de Indícios", "Existencia de Indicios", "Indícios"}},
        {AdmissibilityCriterion::PublicInterest, {"Public Interest", "Interesse Público", "Interesse Publico"}},
        {AdmissibilityCriterion::ClearWriting, {"Clear Writing", "Redação Clara", "Redacao Clara", "Clareza"}},
    };
    c.admissibility_values = {
        {AdmissibilityValue::Yes, {"Yes (met)", "Yes", "Sim (atendido)", "Sim"}},
        {AdmissibilityValue::No, {"No (not met)", "No", "Não (não atendido)", "Não", "Nao"}},
        {AdmissibilityValue::Partial,
         {"Partial (partially met)", "Partial", "Parcial (parcialmente atendido)", "Parcial"}},
        {AdmissibilityValue::NotApplicable,
         {"Not applicable", "N/A", "Não se aplica", "Nao se aplica", "Não aplicável"}},
    };
    c.precautionary_names = {
        {PrecautionaryCriterion::Periculum, {"Periculum in mora", "Periculum", "Perigo da demora"}},
        {PrecautionaryCriterion::ReversePericulum,
         {"Reverse periculum in mora", "Reverse periculum", "Periculum in mora reverso", "Perigo da demora reverso"}},
        {PrecautionaryCriterion::Fumus, {"Fumus boni iuris", "Fumus", "Fumaça do bom direito"}},
    };
    c.precautionary_values = {
        {PrecautionaryValue::Dismissed, {"Dismissed (rejected)", "Dismissed", "Afastado", "Não configurado"}},
        {PrecautionaryValue::Configured, {"Configured (accepted)", "Configured", "Configurado"}},
        {PrecautionaryValue::Inconclusive, {"Inconclusive", "Inconclusivo"}},
        {PrecautionaryValue::NotAnalyzed, {"Not analyzed", "Não analisado", "Nao analisado"}},
    };
    c.allegation_markers = {"Allegations", "Alegações", "Alegacoes"};
    c.request_markers = {"Requests", "Pedidos"};
    return c;
}

namespace {

template <typename Enum, typename FromString>
void override_lists(std::map<Enum, std::vector<std::string>>& target, const Json& j, const char* key,
                    FromString from_string) {
    if (!j.contains(key)) return;
    for (const auto& [name, list] : j.at(key).items()) {
        target[from_string(name)] = list.template get<std::vector<std::string>>();
    }
}

} // namespace

ValidationConfig ValidationConfig::from_json(const Json& j) {
    ValidationConfig c = defaults();
    if (j.is_null()) return c;
    override_lists(c.headers, j, "headers", recommendations::section_from_string);
    override_lists(c.admissibility_names, j, "admissibility_names", admissibility::criterion_from_string);
    override_lists(c.admissibility_values, j, "admissibility_values", admissibility::label_from_string);
    override_lists(c.precautionary_names, j, "precautionary_names", precautionary_criterion_from_string);
    override_lists(c.precautionary_values, j, "precautionary_values", precautionary_value_from_string);
    if (j.contains("allegation_markers")) c.allegation_markers = j["allegation_markers"].get<std::vector<std::string>>();
    if (j.contains("request_markers")) c.request_markers = j["request_markers"].get<std::vector<std::string>>();
    return c;
}

namespace {

struct Line {
    std::size_t begin;
    std::size_t next; // offset of the following line
    std::string_view content;
};

std::vector<Line> lines_with_offsets(std::string_view text) {
    std::vector<Line> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
        std::string_view content = text.substr(pos, end - pos);
        if (!content.empty() && content.back() == '\r') content.remove_suffix(1);
        out.push_back({pos, nl == std::string_view::npos ? text.size() : nl + 1, content});
        pos = end + 1;
    }
    return out;
}

std::string strip_markup(std::string_view s) {
    std::string_view t = text::trim(s);
    while (!t.empty() && (t.front() == '*' || t.front() == '_')) t = text::trim(t.substr(1));
    while (!t.empty() && (t.back() == '*' || t.back() == '_')) t = text::trim(t.substr(0, t.size() - 1));
    return std::string(t);
}

// Lowercased header candidate: "## 3. Admissibility Examination:" -> "admissibility examination".
std::string header_key(std::string_view line) {
    std::string_view t = text::trim(line);
    while (!t.empty() && t.front() == '#') t.remove_prefix(1);
    const std::string bare = strip_markup(t);
    t = bare;
    std::size_t i = 0;
    while (i < t.size() && t[i] >= '0' && t[i] <= '9') ++i;
    if (i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')')) t = text::trim(t.substr(i + 1));
    std::string key = strip_markup(t);
    while (!key.empty() && key.back() == ':') key.pop_back();
    return text::to_lower(strip_markup(key));
}

bool matches_any(const std::string& key, const std::vector<std::string>& names) {
    return std::any_of(names.begin(), names.end(), [&](const std::string& n) { return text::to_lower(n) == key; });
}

} // namespace

std::map<SectionId, SectionSpan> locate_sections(std::string_view text, const ValidationConfig& config) {
    std::vector<std::pair<SectionId, SectionSpan>> found;
    for (const auto& line : lines_with_offsets(text)) {
        const std::string key = header_key(line.content);
        if (key.empty()) continue;
        for (const SectionId id : recommendations::kAllSections) {
            const auto names = config.headers.find(id);
            if (names != config.headers.end() && matches_any(key, names->second)) {
                found.push_back({id, SectionSpan{line.begin, line.next, text.size()}});
                break;
            }
        }
    }
    std::map<SectionId, SectionSpan> out;
    for (std::size_t i = 0; i < found.size(); ++i) {
        const auto [id, span] = found[i];
        if (out.count(id) > 0) {
            throw Error(ErrorKind::MalformedInstruction,
                        "header for section " + std::string(recommendations::to_string(id)) + " appears twice");
        }
        if (i > 0 && static_cast<int>(found[i - 1].first) > static_cast<int>(id)) {
            throw Error(ErrorKind::MalformedInstruction,
                        "section " + std::string(recommendations::to_string(id)) + " is out of order");
        }
        SectionSpan s = span;
        if (i + 1 < found.size()) s.body_end = found[i + 1].second.header_begin;
        out[id] = s;
    }
    return out;
}

std::string isolate_section(const StandardInstruction& doc, SectionId section, const ValidationConfig& config) {
    const auto spans = locate_sections(doc.full_text, config);
    const auto it = spans.find(section);
    if (it == spans.end()) {
        throw Error(ErrorKind::SectionNotFound, "section " + std::string(recommendations::to_string(section)) +
                                                    " not found in " + doc.case_id);
    }
    return doc.full_text.substr(it->second.body_begin, it->second.body_end - it->second.body_begin);
}

namespace {

// "- **Legitimacy**: Yes (met)" -> {"legitimacy", "Yes (met)"}.
std::optional<std::pair<std::string, std::string>> key_value(std::string_view line) {
    std::string_view t = text::trim(line);
    while (!t.empty() && (t.front() == '-' || t.front() == '+')) t = text::trim(t.substr(1));
    if (t.rfind("•", 0) == 0) t = text::trim(t.substr(3));
    const auto colon = t.find(':');
    if (colon == std::string_view::npos) return std::nullopt;
    std::string key = strip_markup(t.substr(0, colon));
    std::string value = strip_markup(t.substr(colon + 1));
    if (key.empty()) return std::nullopt;
    return std::make_pair(text::to_lower(key), std::move(value));
}

template <typename Value>
std::optional<Value> match_value(const std::string& raw, const std::map<Value, std::vector<std::string>>& tokens) {
    std::vector<std::pair<std::string, Value>> candidates;
    for (const auto& [value, list] : tokens) {
        for (const auto& tok : list) candidates.emplace_back(text::to_lower(tok), value);
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
    const std::string lowered = text::to_lower(raw);
    for (const auto& [tok, value] : candidates) {
        if (lowered.compare(0, tok.size(), tok) != 0) continue;
        if (lowered.size() == tok.size()) return value;
        const unsigned char next = static_cast<unsigned char>(lowered[tok.size()]);
        if (!std::isalnum(next) && next < 0x80) return value;
    }
    return std::nullopt;
}

template <typename Criterion, typename Value>
std::map<Criterion, Value> extract_section_labels(std::string_view section,
                                                  const std::map<Criterion, std::vector<std::string>>& names,
                                                  const std::map<Value, std::vector<std::string>>& values,
                                                  const std::string& case_id) {
    std::map<Criterion, std::string> raw;
    for (const auto line : text::split_lines(section)) {
        const auto kv = key_value(line);
        if (!kv) continue;
        for (const auto& [criterion, list] : names) {
            if (matches_any(kv->first, list) && raw.count(criterion) == 0) {
                raw[criterion] = kv->second;
            }
        }
    }
    std::map<Criterion, Value> out;
    for (const auto& [criterion, list] : names) {
        const std::string name = list.empty() ? std::string("?") : list.front();
        const auto it = raw.find(criterion);
        if (it == raw.end()) {
            throw Error(ErrorKind::LabelParseError, case_id + ": no label line for " + name);
        }
        const auto value = match_value(it->second, values);
        if (!value) {
            throw Error(ErrorKind::LabelParseError, case_id + ": unrecognized label '" + it->second + "' for " + name);
        }
        out[criterion] = *value;
    }
    return out;
}

} // namespace

ExtractedLabels extract_labels(const StandardInstruction& doc, const ValidationConfig& config) {
    ExtractedLabels out;
    out.admissibility = extract_section_labels(isolate_section(doc, SectionId::Admissibility, config),
                                               config.admissibility_names, config.admissibility_values, doc.case_id);
    out.precautionary = extract_section_labels(isolate_section(doc, SectionId::Precautionary, config),
                                               config.precautionary_names, config.precautionary_values, doc.case_id);
    return out;
}

void to_json(Json& j, const ValidationRecord& r) {
    Json adm = Json::object();
    for (const auto& [c, v] : r.admissibility) adm[std::string(admissibility::to_string(c))] = std::string(admissibility::to_string(v));
    Json pre = Json::object();
    for (const auto& [c, v] : r.precautionary) pre[std::string(to_string(c))] = std::string(to_string(v));
    j = Json{{"case_id", r.case_id},
             {"basic_info", r.basic_info},
             {"claims_text", r.claims_text},
             {"requests_text", r.requests_text},
             {"admissibility", std::move(adm)},
             {"precautionary", std::move(pre)},
             {"recommendations_text", r.recommendations_text}};
}

void from_json(const Json& j, ValidationRecord& r) {
    r.case_id = j.at("case_id").get<std::string>();
    r.basic_info = j.at("basic_info").get<std::map<std::string, std::string>>();
    r.claims_text = j.at("claims_text").get<std::string>();
    r.requests_text = j.at("requests_text").get<std::string>();
    r.admissibility.clear();
    for (const auto& [c, v] : j.at("admissibility").items()) {
        r.admissibility[admissibility::criterion_from_string(c)] = admissibility::label_from_string(v.get<std::string>());
    }
    r.precautionary.clear();
    for (const auto& [c, v] : j.at("precautionary").items()) {
        r.precautionary[precautionary_criterion_from_string(c)] = precautionary_value_from_string(v.get<std::string>());
    }
    r.recommendations_text = j.at("recommendations_text").get<std::string>();
}

BasicInfoExtractor line_basic_info_extractor(extraction::FormSchema schema) {
    return [schema = std::move(schema)](std::string_view section) {
        std::vector<std::string> names;
        for (const auto& f : schema.fields) names.push_back(f.name);
        std::map<std::string, std::string> out;
        for (const auto& [name, parsed] : extraction::parse_form_lines(section, names)) {
            if (parsed.value) out[name] = *parsed.value;
        }
        return out;
    };
}

BasicInfoExtractor llm_basic_info_extractor(extraction::FormSchema schema, llm::LlmGateway& gateway) {
    return [schema = std::move(schema), &gateway](std::string_view section) {
        extraction::CaseText case_text;
        case_text.main_doc_id = "instruction";
        ingest::ExtractedDocument doc;
        doc.doc_id = "instruction";
        doc.text = std::string(section);
        case_text.documents.push_back(std::move(doc));
        const retrieval::CorpusSet no_index;
        extraction::BasicInfoOptions options;
        // The whole section fits the first-pages window.
        options.page_chars = std::max<std::size_t>(text::code_point_count(section), 1);
        const auto form = extraction::extract_basic_info(case_text, schema, no_index, gateway, options);
        std::map<std::string, std::string> out;
        for (const auto& [name, fv] : form.fields) {
            if (fv.value) out[name] = *fv.value;
        }
        return out;
    };
}

namespace {

std::string join_lines(const std::vector<std::string_view>& lines) {
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i > 0) out += "\n";
        out += lines[i];
    }
    return std::string(text::trim(out));
}

bool is_marker(std::string_view line, const std::vector<std::string>& markers) {
    std::string key = strip_markup(line);
    if (key.empty() || key.back() != ':') return false;
    key.pop_back();
    return matches_any(text::to_lower(strip_markup(key)), markers);
}

} // namespace

ValidationRecord parse_instruction(const StandardInstruction& doc, const BasicInfoExtractor& basic_info,
                                   const ValidationConfig& config) {
    ValidationRecord r;
    r.case_id = doc.case_id;
    const std::string claims = isolate_section(doc, SectionId::ClaimsRequests, config);
    enum { Before, InAllegations, InRequests } mode = Before;
    std::vector<std::string_view> before, allegations, requests;
    for (const auto line : text::split_lines(claims)) {
        if (is_marker(line, config.allegation_markers)) {
            mode = InAllegations;
        } else if (is_marker(line, config.request_markers)) {
            mode = InRequests;
        } else {
            (mode == Before ? before : mode == InAllegations ? allegations : requests).push_back(line);
        }
    }
    r.claims_text = mode == Before ? join_lines(before) : join_lines(allegations);
    r.requests_text = join_lines(requests);

    const auto labels = extract_labels(doc, config);
    r.admissibility = labels.admissibility;
    r.precautionary = labels.precautionary;
    r.recommendations_text = std::string(text::trim(isolate_section(doc, SectionId::Recommendations, config)));
    r.basic_info = basic_info(isolate_section(doc, SectionId::BasicInfo, config));
    return r;
}

StandardInstruction synthesize_instruction(const ValidationRecord& record, const ValidationConfig& config) {
    const auto first = [](const auto& map, const auto& key) -> std::string {
        const auto it = map.find(key);
        if (it == map.end() || it->second.empty()) {
            throw Error(ErrorKind::ConfigError, "validation config lacks a name");
        }
        return it->second.front();
    };
    std::string out = "# Instruction: " + record.case_id + "\n";
    std::size_t n = 0;
    const auto header = [&](SectionId id) {
        out += "\n## " + std::to_string(++n) + ". " + first(config.headers, id) + "\n\n";
    };
    header(SectionId::BasicInfo);
    for (const auto& [name, value] : record.basic_info) out += name + ": " + value + "\n";
    header(SectionId::ClaimsRequests);
    out += config.allegation_markers.at(0) + ":\n" + record.claims_text + "\n\n" + config.request_markers.at(0) +
           ":\n" + record.requests_text + "\n";
    header(SectionId::Admissibility);
    for (const auto& [c, v] : record.admissibility) {
        out += first(config.admissibility_names, c) + ": " + first(config.admissibility_values, v) + "\n";
    }
    header(SectionId::Precautionary);
    for (const auto& [c, v] : record.precautionary) {
        out += first(config.precautionary_names, c) + ": " + first(config.precautionary_values, v) + "\n";
    }
    header(SectionId::Recommendations);
    out += record.recommendations_text + "\n";
    return {record.case_id, std::move(out)};
}

ValidationTable build_validation_table(const std::vector<StandardInstruction>& docs,
                                       const BasicInfoExtractor& basic_info, const ValidationConfig& config) {
    ValidationTable table;
    if (docs.empty()) {
        table.warnings.push_back("no instruction documents given; the table is empty");
    }
    for (const auto& doc : docs) {
        try {
            table.records.push_back(parse_instruction(doc, basic_info, config));
        } catch (const Error& e) {
            table.errors.push_back({doc.case_id, std::string(casework::to_string(e.kind())), e.what()});
        }
    }
    return table;
}

std::vector<StandardInstruction> load_instructions(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw Error(ErrorKind::IoError, "not a directory: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".md" || ext == ".txt")) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<StandardInstruction> out;
    for (const auto& f : files) out.push_back({f.stem().string(), read_file(f)});
    return out;
}

std::string to_jsonl(const std::vector<ValidationRecord>& records) {
    std::string out;
    for (const auto& r : records) out += Json(r).dump() + "\n";
    return out;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace

std::string labels_csv(const std::vector<ValidationRecord>& records) {
    std::string out = "case_id";
    for (const auto c : admissibility::kAllCriteria) out += "," + std::string(admissibility::to_string(c));
    for (const auto c : kPrecautionaryCriteria) out += "," + std::string(to_string(c));
    out += "\n";
    for (const auto& r : records) {
        out += csv_field(r.case_id);
        for (const auto c : admissibility::kAllCriteria) {
            const auto it = r.admissibility.find(c);
            out += "," + (it == r.admissibility.end() ? std::string() : std::string(admissibility::to_string(it->second)));
        }
        for (const auto c : kPrecautionaryCriteria) {
            const auto it = r.precautionary.find(c);
            out += "," + (it == r.precautionary.end() ? std::string() : std::string(to_string(it->second)));
        }
        out += "\n";
    }
    return out;
}

} // namespace casework::validation
