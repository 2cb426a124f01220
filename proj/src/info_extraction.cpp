#include "casework/info_extraction.hpp"

#include "casework/error.hpp"
#include "casework/text.hpp"

#include <algorithm>
#include <set>

namespace casework::extraction {

FormSchema FormSchema::default_schema() {
    FormSchema schema;
    const auto add = [&](std::string name, std::string description, bool required) {
        schema.fields.push_back({std::move(name), std::move(description), required});
    };
    add("case_id", "Case number assigned by the court (e.g. TC 012.345/2023-1).", true);
    add("case_type", "Type of proceeding, e.g. representação or denúncia.", true);
    add("submission_date", "Date the filing was submitted to the court.", false);
    add("plaintiff_name", "Name of the person or company filing the case.", true);
    add("plaintiff_id", "Plaintiff's taxpayer or registration number (CPF/CNPJ).", false);
    add("plaintiff_type", "Kind of plaintiff: bidding company, public official, citizen, etc.", false);
    add("plaintiff_representative", "Lawyer or legal representative acting for the plaintiff.", false);
    add("defendant_name", "Public body or entity whose conduct is challenged.", true);
    add("defendant_id", "Defendant's CNPJ or registration number.", false);
    add("responsible_officials", "Officials named as responsible for the challenged acts.", false);
    add("federal_unit", "State (UF) where the challenged acts took place.", false);
    add("municipality", "Municipality where the challenged acts took place.", false);
    add("procurement_number", "Identifier of the procurement procedure (e.g. Pregão Eletrônico 12/2023).", false);
    add("procurement_modality", "Procurement modality (pregão, concorrência, dispensa, ...).", false);
    add("procurement_object", "Goods or services being procured.", false);
    add("procurement_date", "Date of the procurement session.", false);
    add("contract_number", "Number of the resulting contract, if any.", false);
    add("contract_value", "Amount involved: estimated or contracted value in reais.", false);
    add("contract_duration", "Contract duration or term of validity.", false);
    add("contractor_name", "Company awarded the contract.", false);
    add("contractor_id", "Awarded company's CNPJ.", false);
    add("funding_source", "Origin of the federal funds involved.", false);
    add("legal_basis", "Statutes and provisions invoked by the plaintiff.", false);
    add("precautionary_measure_requested", "Whether the filing requests a precautionary measure (yes/no).", false);
    add("rapporteur", "Minister or rapporteur assigned to the case.", false);
    add("case_summary", "One-paragraph summary of the case.", true);
    return schema;
}

FormSchema FormSchema::from_json(const Json& j) {
    FormSchema schema;
    const Json& fields = j.is_array() ? j : j.at("fields");
    for (const auto& f : fields) {
        schema.fields.push_back(
            {f.at("name").get<std::string>(), f.value("description", ""), f.value("required", false)});
    }
    schema.validate();
    return schema;
}

Json FormSchema::to_json() const {
    Json fields_json = Json::array();
    for (const auto& f : fields) {
        fields_json.push_back(Json{{"name", f.name}, {"description", f.description}, {"required", f.required}});
    }
    return Json{{"fields", std::move(fields_json)}};
}

void FormSchema::validate() const {
    if (fields.empty()) {
        throw Error(ErrorKind::ConfigError, "form schema has no fields");
    }
    std::set<std::string> names;
    for (const auto& f : fields) {
        if (text::trim(f.name).empty() || f.name.find(':') != std::string::npos) {
            throw Error(ErrorKind::ConfigError, "invalid form field name '" + f.name + "'");
        }
        if (!names.insert(f.name).second) {
            throw Error(ErrorKind::ConfigError, "duplicate form field '" + f.name + "'");
        }
    }
}

const FormField* FormSchema::find(std::string_view name) const {
    const auto it = std::find_if(fields.begin(), fields.end(), [&](const FormField& f) { return f.name == name; });
    return it == fields.end() ? nullptr : &*it;
}

std::string_view to_string(Provenance p) {
    switch (p) {
    case Provenance::FirstPages: return "FirstPages";
    case Provenance::RagSearch: return "RagSearch";
    case Provenance::CraftedQuery: return "CraftedQuery";
    }
    return "FirstPages";
}

Provenance provenance_from_string(std::string_view s) {
    if (s == "FirstPages") return Provenance::FirstPages;
    if (s == "RagSearch") return Provenance::RagSearch;
    if (s == "CraftedQuery") return Provenance::CraftedQuery;
    throw Error(ErrorKind::ParseError, "unknown provenance '" + std::string(s) + "'");
}

std::vector<std::string> FilledForm::missing(const FormSchema& schema) const {
    std::vector<std::string> out;
    for (const auto& f : schema.fields) {
        const auto it = fields.find(f.name);
        if (it == fields.end() || !it->second.value) {
            out.push_back(f.name);
        }
    }
    return out;
}

void to_json(Json& j, const FilledForm& form) {
    j = Json::object();
    for (const auto& [name, fv] : form.fields) {
        Json entry{{"value", nullptr}, {"provenance", nullptr}, {"source_doc_id", nullptr}};
        if (fv.value) entry["value"] = *fv.value;
        if (fv.provenance) entry["provenance"] = std::string(to_string(*fv.provenance));
        if (fv.source_doc_id) entry["source_doc_id"] = *fv.source_doc_id;
        j[name] = std::move(entry);
    }
}

void from_json(const Json& j, FilledForm& form) {
    form.fields.clear();
    for (const auto& [name, entry] : j.items()) {
        FieldValue fv;
        if (!entry.at("value").is_null()) fv.value = entry["value"].get<std::string>();
        if (!entry.at("provenance").is_null()) fv.provenance = provenance_from_string(entry["provenance"].get<std::string>());
        if (!entry.at("source_doc_id").is_null()) fv.source_doc_id = entry["source_doc_id"].get<std::string>();
        form.fields[name] = std::move(fv);
    }
}

const ingest::ExtractedDocument& CaseText::main() const {
    const auto it = std::find_if(documents.begin(), documents.end(),
                                 [&](const ingest::ExtractedDocument& d) { return d.doc_id == main_doc_id; });
    if (it == documents.end()) {
        throw Error(ErrorKind::PreconditionViolation, "main document '" + main_doc_id + "' not extracted");
    }
    return *it;
}

std::map<std::string, ParsedField> parse_form_lines(std::string_view reply, const std::vector<std::string>& allowed) {
    std::map<std::string, ParsedField> out;
    for (auto line : text::split_lines(reply)) {
        line = text::trim(line);
        while (!line.empty() && (line.front() == '-' || line.front() == '*')) {
            line = text::trim(line.substr(1));
        }
        const auto colon = line.find(':');
        if (colon == std::string_view::npos) {
            continue;
        }
        const std::string name(text::trim(line.substr(0, colon)));
        if (std::find(allowed.begin(), allowed.end(), name) == allowed.end() || out.count(name) > 0) {
            continue;
        }
        std::string_view value = text::trim(line.substr(colon + 1));
        ParsedField parsed;
        // Trailing "[source n]" citation.
        if (!value.empty() && value.back() == ']') {
            const auto open = value.rfind('[');
            if (open != std::string_view::npos) {
                const auto inner = text::trim(value.substr(open + 1, value.size() - open - 2));
                if (text::starts_with_icase(inner, "source")) {
                    const std::string digits(text::trim(inner.substr(6)));
                    if (!digits.empty() && std::all_of(digits.begin(), digits.end(), ::isdigit)) {
                        parsed.source = std::stoul(digits);
                        value = text::trim(value.substr(0, open));
                    }
                }
            }
        }
        if (!value.empty() && text::to_lower(value) != "unknown") {
            parsed.value = std::string(value);
        }
        out[name] = std::move(parsed);
    }
    return out;
}

namespace {

constexpr std::string_view kFormatReminder =
    "\n\nYour previous reply could not be parsed. Answer only with lines of the form \"<field>: <value>\".\n";

std::map<std::string, ParsedField> complete_form(llm::LlmGateway& gateway, const std::string& prompt,
                                                 const std::vector<std::string>& fields) {
    for (int attempt = 0; attempt < 2; ++attempt) {
        const auto reply = gateway.complete(attempt == 0 ? prompt : prompt + std::string(kFormatReminder)).text;
        auto parsed = parse_form_lines(reply, fields);
        if (!parsed.empty()) {
            return parsed;
        }
    }
    throw Error(ErrorKind::FormParseError, "form reply had no field lines after a reprompt");
}

std::string field_lines(const FormSchema& schema, const std::vector<std::string>& names) {
    std::string out;
    for (const auto& name : names) {
        const FormField* f = schema.find(name);
        out += "- " + name + ": " + (f ? f->description : std::string()) + "\n";
    }
    return out;
}

std::string numbered_passages(const std::vector<retrieval::SearchHit>& hits) {
    std::string out;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        out += "[" + std::to_string(i + 1) + "] (" + hits[i].doc_id + ") " + hits[i].text + "\n";
    }
    return out;
}

// Renders head + body + tail with `body` truncated to fit the prompt budget.
std::string fit_prompt(const llm::LlmGateway& gateway, const std::string& head, std::string_view body,
                       const std::string& tail) {
    const std::size_t overhead = gateway.tokenizer().count(head + tail);
    require(overhead < gateway.prompt_budget(), "prompt scaffolding exceeds the context budget");
    return head + llm::truncate_to_budget(body, gateway.prompt_budget() - overhead, gateway.tokenizer()) + tail;
}

std::optional<std::string> source_doc(const ParsedField& parsed, const std::vector<retrieval::SearchHit>& hits) {
    if (parsed.source && *parsed.source >= 1 && *parsed.source <= hits.size()) {
        return hits[*parsed.source - 1].doc_id;
    }
    if (!hits.empty()) {
        return hits.front().doc_id;
    }
    return std::nullopt;
}

std::string extraction_head(const FormSchema& schema, const std::vector<std::string>& names) {
    return "## Instructions\n\nExtract the values of the form fields below from the retrieved passages. Answer with "
           "one line per field in the form \"<field>: <value> [source <n>]\", where <n> is the number of the passage "
           "containing the value, or \"<field>: UNKNOWN\" when no passage contains it.\n\n## Fields\n\n" +
           field_lines(schema, names) + "\n## Passages\n\n";
}

} // namespace

FilledForm extract_basic_info(const CaseText& case_text, const FormSchema& schema,
                              const retrieval::CorpusSet& corpora, llm::LlmGateway& gateway,
                              const BasicInfoOptions& options) {
    const auto& main_doc = case_text.main();
    require(!text::trim(main_doc.text).empty(), "main document text is empty");
    schema.validate();

    FilledForm form;
    for (const auto& f : schema.fields) {
        form.fields[f.name] = FieldValue{};
    }
    std::vector<std::string> all_names;
    for (const auto& f : schema.fields) all_names.push_back(f.name);

    // Phase 1: schema + first two pages of the main document.
    {
        const std::string head =
            "## Instructions\n\nYou are filling in the basic-information form of an audit case. For each field "
            "below, read its explanation and extract its value from the document excerpt. Answer with one line per "
            "field in the form \"<field>: <value>\". Write \"<field>: UNKNOWN\" when the excerpt does not contain "
            "the value.\n\n## Form fields\n\n" +
            field_lines(schema, all_names) + "\n## Document excerpt (first pages of the main document)\n\n";
        const std::string excerpt = ingest::first_pages(main_doc.text, 2, options.page_chars);
        const auto parsed = complete_form(gateway, fit_prompt(gateway, head, excerpt, "\n"), all_names);
        for (const auto& [name, pf] : parsed) {
            if (pf.value) {
                form.fields[name] = FieldValue{pf.value, Provenance::FirstPages, main_doc.doc_id};
            }
        }
    }

    const bool have_case_index = corpora.has(CorpusId::CaseDocuments);

    // Phase 2: one model-composed query per missing field.
    if (have_case_index) {
        for (const auto& name : form.missing(schema)) {
            const FormField& field = *schema.find(name);
            const std::string query_prompt =
                "## Instructions\n\nThe form field below could not be found in the first pages of the main case "
                "document. Write a search query that would find its value in the other case documents. Answer with "
                "a single line in the form \"Query: <query>\".\n\n## Field\n\n- " +
                field.name + ": " + field.description + "\n";
            const std::string reply = gateway.complete(query_prompt).text;
            std::string query;
            for (const auto line : text::split_lines(reply)) {
                const auto t = text::trim(line);
                if (text::starts_with_icase(t, "query:")) {
                    query = std::string(text::trim(t.substr(6)));
                    break;
                }
                if (query.empty() && !t.empty()) {
                    query = std::string(t);
                }
            }
            if (text::tokenize(query).empty()) {
                continue;
            }
            const auto hits = corpora.search(CorpusId::CaseDocuments, query, options.top_k);
            if (hits.empty()) {
                continue;
            }
            const auto parsed = complete_form(
                gateway, fit_prompt(gateway, extraction_head(schema, {name}), numbered_passages(hits), "\n"), {name});
            if (const auto it = parsed.find(name); it != parsed.end() && it->second.value) {
                form.fields[name] = FieldValue{it->second.value, Provenance::RagSearch, source_doc(it->second, hits)};
            }
        }
    }

    // Phase 3: crafted queries, then one final extraction pass.
    if (have_case_index) {
        std::vector<std::string> targets;
        std::vector<retrieval::SearchHit> passages;
        std::set<std::string> seen;
        for (const auto& name : form.missing(schema)) {
            const auto q = options.crafted_queries.find(name);
            if (q == options.crafted_queries.end()) {
                continue;
            }
            const FormField& field = *schema.find(name);
            const std::string query =
                llm::render_prompt(llm::PromptTemplate("crafted_query", q->second),
                                   {{"field", field.name}, {"description", field.description}});
            if (text::tokenize(query).empty()) {
                continue;
            }
            targets.push_back(name);
            for (auto& hit : corpora.search(CorpusId::CaseDocuments, query, options.top_k)) {
                if (seen.insert(hit.passage_id).second) {
                    passages.push_back(std::move(hit));
                }
            }
        }
        if (!targets.empty() && !passages.empty()) {
            const auto parsed = complete_form(
                gateway, fit_prompt(gateway, extraction_head(schema, targets), numbered_passages(passages), "\n"),
                targets);
            for (const auto& [name, pf] : parsed) {
                if (pf.value) {
                    form.fields[name] = FieldValue{pf.value, Provenance::CraftedQuery, source_doc(pf, passages)};
                }
            }
        }
    }
    return form;
}

// ---------------------------------------------------------------------------

void to_json(Json& j, const AllegationList& list) {
    const auto items = [](const std::vector<EnumeratedItem>& v) {
        Json arr = Json::array();
        for (const auto& it : v) arr.push_back(Json{{"index", it.index}, {"text", it.text}});
        return arr;
    };
    j = Json{{"allegations", items(list.allegations)}, {"requests", items(list.requests)}};
}

void from_json(const Json& j, AllegationList& list) {
    const auto items = [](const Json& arr) {
        std::vector<EnumeratedItem> v;
        for (const auto& it : arr) v.push_back({it.at("index").get<std::size_t>(), it.at("text").get<std::string>()});
        return v;
    };
    list.allegations = items(j.at("allegations"));
    list.requests = items(j.at("requests"));
}

namespace {

enum class SectionKind { None, Allegations, Requests };

SectionKind header_kind(std::string_view line) {
    std::string_view t = text::trim(line);
    while (!t.empty() && (t.front() == '#' || t.front() == '*')) t = text::trim(t.substr(1));
    while (!t.empty() && (t.back() == '*' || t.back() == ':')) t = text::trim(t.substr(0, t.size() - 1));
    const std::string lowered = text::to_lower(t);
    static const std::set<std::string> kAllegations = {"allegations", "alegações", "alegacoes", "allegation"};
    static const std::set<std::string> kRequests = {"requests", "pedidos", "request", "requerimentos"};
    if (kAllegations.count(lowered)) return SectionKind::Allegations;
    if (kRequests.count(lowered)) return SectionKind::Requests;
    return SectionKind::None;
}

// Text of a list item line ("1. x", "2) x", "- x"), or nullopt.
std::optional<std::string_view> item_text(std::string_view line) {
    std::string_view t = text::trim(line);
    if (t.empty()) return std::nullopt;
    if (t.front() == '-' || t.front() == '*') {
        return text::trim(t.substr(1));
    }
    if (t.rfind("•", 0) == 0) {
        return text::trim(t.substr(3));
    }
    std::size_t i = 0;
    while (i < t.size() && t[i] >= '0' && t[i] <= '9') ++i;
    if (i > 0 && i < t.size() && (t[i] == '.' || t[i] == ')')) {
        return text::trim(t.substr(i + 1));
    }
    return std::nullopt;
}

} // namespace

AllegationList parse_allegations_requests(std::string_view reply) {
    AllegationList out;
    bool saw_allegations = false;
    bool saw_requests = false;
    SectionKind current = SectionKind::None;
    for (const auto line : text::split_lines(reply)) {
        const SectionKind header = header_kind(line);
        if (header != SectionKind::None) {
            current = header;
            (header == SectionKind::Allegations ? saw_allegations : saw_requests) = true;
            continue;
        }
        if (current == SectionKind::None) {
            continue;
        }
        auto& list = current == SectionKind::Allegations ? out.allegations : out.requests;
        if (const auto item = item_text(line)) {
            if (!item->empty()) {
                list.push_back({list.size() + 1, std::string(*item)});
            }
        } else if (!text::trim(line).empty() && !list.empty()) {
            list.back().text += " " + std::string(text::trim(line));
        }
    }
    if (!saw_allegations && !saw_requests) {
        throw Error(ErrorKind::AllegationParseError, "reply has neither an allegations nor a requests section");
    }
    return out;
}

std::string default_allegation_example() {
    return "Allegations:\n"
           "1. The bidding notice required a technical certificate not provided for in the applicable law, "
           "restricting competition.\n"
           "2. The winning bid was accepted despite prices above the market reference.\n"
           "Requests:\n"
           "1. Suspension of the procurement as a precautionary measure.\n"
           "2. Annulment of the bidding notice clause that restricts competition.\n";
}

std::string allegation_prompt(std::string_view main_text, std::string_view example_text, std::size_t prompt_budget,
                              const llm::Tokenizer& tokenizer) {
    const std::string head =
        "## Instructions\n\n"
        "You are an intelligent agent that reasons about and interprets legal documents. Below you will find a "
        "case's main document and an example of the allegations and requests to extract. Extract the allegations "
        "and requests from the case's main document.\n\n"
        "## Example\n\n"
        "Your list of allegations and requests must look like the example below:\n\n" +
        std::string(text::trim(example_text)) +
        "\n\n## Rules\n\n"
        "Follow these rules:\n"
        "1. Identify the allegations and requests made by the plaintiff. They may concern, among other things, the "
        "violation of a law, a regulation or a contract.\n"
        "2. Enumerate the allegations and requests in the same order in which they appear in the case's main "
        "document.\n"
        "3. Write the allegations under a line \"Allegations:\" and the requests under a line \"Requests:\", each "
        "as a numbered list.\n\n"
        "## Case main document\n\n";
    const std::size_t overhead = tokenizer.count(head) + 1;
    require(overhead < prompt_budget, "allegation prompt scaffolding exceeds the context budget");
    return head + llm::truncate_to_budget(main_text, prompt_budget - overhead, tokenizer) + "\n";
}

AllegationList extract_allegations_requests(std::string_view main_text, llm::LlmGateway& gateway,
                                            std::string_view example_text) {
    require(!text::trim(main_text).empty(), "main document text is empty");
    const std::string prompt = allegation_prompt(main_text, example_text, gateway.prompt_budget(), gateway.tokenizer());
    try {
        return parse_allegations_requests(gateway.complete(prompt).text);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::AllegationParseError) throw;
    }
    return parse_allegations_requests(
        gateway
            .complete(prompt + "\nYour previous reply could not be parsed. Use the \"Allegations:\" and "
                               "\"Requests:\" headings followed by numbered lists.\n")
            .text);
}

} // namespace casework::extraction
