#include "casework/recommendations.hpp"

#include "casework/digest.hpp"
#include "casework/error.hpp"
#include "casework/text.hpp"

#include <algorithm>

namespace casework::recommendations {

std::string_view to_string(SectionId s) {
    switch (s) {
    case SectionId::BasicInfo: return "BasicInfo";
    case SectionId::ClaimsRequests: return "ClaimsRequests";
    case SectionId::Admissibility: return "Admissibility";
    case SectionId::Precautionary: return "Precautionary";
    case SectionId::Recommendations: return "Recommendations";
    }
    return "BasicInfo";
}

SectionId section_from_string(std::string_view s) {
    for (const SectionId id : kAllSections) {
        if (to_string(id) == s) return id;
    }
    throw Error(ErrorKind::ParseError, "unknown section '" + std::string(s) + "'");
}

std::string_view section_title(SectionId s) {
    switch (s) {
    case SectionId::BasicInfo: return "Basic Information";
    case SectionId::ClaimsRequests: return "Claims and Requests";
    case SectionId::Admissibility: return "Admissibility Examination";
    case SectionId::Precautionary: return "Precautionary Measure Analysis";
    case SectionId::Recommendations: return "Recommendations";
    }
    return {};
}

const Json* StageOutputs::find(std::string_view stage) const {
    const auto it = outputs.find(std::string(stage));
    return it == outputs.end() ? nullptr : &it->second;
}

std::vector<std::string> section_dependencies(SectionId s) {
    switch (s) {
    case SectionId::BasicInfo: return {"basic_info"};
    case SectionId::ClaimsRequests: return {"allegations"};
    case SectionId::Admissibility: return {"admissibility"};
    case SectionId::Precautionary: return {"periculum", "fumus"};
    case SectionId::Recommendations: return {"admissibility", "periculum", "fumus", "allegations"};
    }
    return {};
}

Guidelines Guidelines::from_json(const Json& j) {
    Guidelines g;
    if (j.is_null()) return g;
    g.global = j.value("global", "");
    if (j.contains("sections")) {
        for (const auto& [name, value] : j.at("sections").items()) {
            g.sections[section_from_string(name)] = value.get<std::string>();
        }
    }
    return g;
}

Json Guidelines::to_json() const {
    Json sections_json = Json::object();
    for (const auto& [id, value] : sections) sections_json[std::string(recommendations::to_string(id))] = value;
    return Json{{"global", global}, {"sections", std::move(sections_json)}};
}

const InstructionSection& InstructionDraft::section(SectionId s) const {
    const auto it = std::find_if(sections.begin(), sections.end(),
                                 [&](const InstructionSection& x) { return x.section_id == s; });
    if (it == sections.end()) {
        throw Error(ErrorKind::AssemblyError, "draft has no section " + std::string(to_string(s)));
    }
    return *it;
}

std::string InstructionDraft::to_markdown() const {
    std::string out = "# Instruction: " + case_id + "\n";
    for (std::size_t i = 0; i < sections.size(); ++i) {
        out += "\n## " + std::to_string(i + 1) + ". " + std::string(section_title(sections[i].section_id)) +
               "\n\n" + std::string(text::trim(sections[i].text)) + "\n";
    }
    return out;
}

Json InstructionDraft::to_json() const {
    Json secs = Json::array();
    for (const auto& s : sections) {
        secs.push_back(Json{{"section_id", std::string(recommendations::to_string(s.section_id))},
                            {"text", s.text},
                            {"inputs_digest", s.inputs_digest}});
    }
    return Json{{"case_id", case_id}, {"generated_at", generated_at}, {"sections", std::move(secs)}};
}

InstructionDraft InstructionDraft::from_json(const Json& j) {
    InstructionDraft d;
    d.case_id = j.at("case_id").get<std::string>();
    d.generated_at = j.at("generated_at").get<std::string>();
    for (const auto& s : j.at("sections")) {
        d.sections.push_back({section_from_string(s.at("section_id").get<std::string>()),
                              s.at("text").get<std::string>(), s.at("inputs_digest").get<std::string>()});
    }
    return d;
}

namespace {

const Json& require_stage(SectionId s, const StageOutputs& outputs, const std::string& stage) {
    const Json* j = outputs.find(stage);
    if (j == nullptr) {
        throw Error(ErrorKind::MissingStage,
                    "section " + std::string(to_string(s)) + " requires stage " + stage);
    }
    return *j;
}

std::string str(const Json& j, const char* key) {
    if (!j.is_object() || !j.contains(key) || j.at(key).is_null()) return {};
    const Json& v = j.at(key);
    return v.is_string() ? v.get<std::string>() : v.dump();
}

std::string render_basic_info(const Json& j) {
    std::string out;
    for (const auto& [name, entry] : j.items()) {
        const std::string value = str(entry, "value");
        out += name + ": " + (value.empty() ? std::string("(not found)") : value) + "\n";
    }
    return out;
}

std::string render_list(const Json& items) {
    std::string out;
    for (const auto& it : items) {
        out += std::to_string(it.at("index").get<std::size_t>()) + ". " + str(it, "text") + "\n";
    }
    return out;
}

std::string render_allegations(const Json& j) {
    return "Allegations:\n" + render_list(j.at("allegations")) + "Requests:\n" + render_list(j.at("requests"));
}

std::string render_admissibility(const Json& j) {
    std::string out;
    for (const auto& v : j.at("verdicts")) {
        out += str(v, "criterion") + ": " + str(v, "label") + "\n" + str(v, "rationale") + "\n\n";
    }
    out += "Overall admissible: " + std::string(j.value("overall_admissible", false) ? "yes" : "no") + "\n";
    return out;
}

std::string render_periculum(const Json& j) {
    return "Verdict: " + str(j, "verdict") + "\n" + str(j, "text") + "\n";
}

std::string render_fumus(const Json& j) {
    std::string out;
    for (const auto& c : j.at("classifications")) {
        out += "Allegation " + str(c, "allegation_index") + ": " + str(c, "label") + "\n" + str(c, "rationale") +
               "\n\n";
    }
    out += str(j, "summary") + "\n";
    return out;
}

std::string render_stage(const std::string& stage, const Json& j) {
    if (stage == "basic_info") return render_basic_info(j);
    if (stage == "allegations") return render_allegations(j);
    if (stage == "admissibility") return render_admissibility(j);
    if (stage == "periculum") return render_periculum(j);
    if (stage == "fumus") return render_fumus(j);
    return canonical_dump(j);
}

std::string stage_heading(SectionId s, const std::string& stage) {
    if (s == SectionId::Recommendations && stage == "fumus") return "Merits: legal grounding of each allegation";
    if (s == SectionId::Recommendations && stage == "allegations") return "Merits: allegations and requests";
    if (stage == "basic_info") return "Basic information form";
    if (stage == "allegations") return "Allegations and requests";
    if (stage == "admissibility") return "Admissibility examination";
    if (stage == "periculum") return "Danger in delay (periculum in mora)";
    if (stage == "fumus") return "Appearance of good law (fumus boni iuris)";
    return stage;
}

std::string section_guideline(SectionId s, const Guidelines& g) {
    std::string out = g.global;
    if (const auto it = g.sections.find(s); it != g.sections.end()) {
        if (!out.empty()) out += "\n\n";
        out += it->second;
    }
    return out;
}

} // namespace

std::string section_inputs_digest(SectionId s, const StageOutputs& outputs, const Guidelines& guidelines) {
    DigestBuilder digest;
    digest.add("section").add(to_string(s)).add(outputs.case_id);
    for (const auto& stage : section_dependencies(s)) {
        digest.add(stage).add(canonical_dump(require_stage(s, outputs, stage)));
    }
    digest.add(section_guideline(s, guidelines));
    return digest.hex();
}

std::string section_prompt(SectionId s, const StageOutputs& outputs, const Guidelines& guidelines,
                           std::size_t prompt_budget, const llm::Tokenizer& tokenizer) {
    std::string inputs;
    for (const auto& stage : section_dependencies(s)) {
        inputs += "### " + stage_heading(s, stage) + "\n\n" + render_stage(stage, require_stage(s, outputs, stage)) +
                  "\n";
    }
    std::string guideline = section_guideline(s, guidelines);
    if (guideline.empty()) guideline = "(none)";
    const std::string head = "## Guidelines and examples\n\n" + guideline + "\n\n## Case " + outputs.case_id +
                             ": analysis results\n\n";
    std::string task = "\n## Instructions\n\nWrite the section \"" + std::string(section_title(s)) +
                       "\" of the instruction for this case, following the guidelines and examples above. Use "
                       "only the analysis results given. Reply with the section text only, without a heading.\n";
    if (s == SectionId::Recommendations) {
        task += "Propose the next steps for the case, taking into account the admissibility examination, the "
                "precautionary measure analysis and the merits of the claims.\n";
    }
    const std::size_t overhead = tokenizer.count(head + task);
    require(overhead < prompt_budget, "section prompt scaffolding exceeds the context budget");
    return head + llm::truncate_to_budget(inputs, prompt_budget - overhead, tokenizer) + task;
}

InstructionSection generate_section(SectionId s, const StageOutputs& outputs, const Guidelines& guidelines,
                                    llm::LlmGateway& gateway) {
    InstructionSection section;
    section.section_id = s;
    section.inputs_digest = section_inputs_digest(s, outputs, guidelines);
    const std::string prompt =
        section_prompt(s, outputs, guidelines, gateway.prompt_budget(), gateway.tokenizer());
    for (int attempt = 0; attempt < 2; ++attempt) {
        const std::string p = attempt == 0 ? prompt : prompt + "\nThe previous reply was empty. Write the section.\n";
        section.text = std::string(text::trim(gateway.complete(p).text));
        if (!section.text.empty()) return section;
    }
    throw Error(ErrorKind::ParseError, "empty draft for section " + std::string(to_string(s)));
}

InstructionDraft assemble_instruction(std::string case_id, std::vector<InstructionSection> sections,
                                      std::string generated_at) {
    InstructionDraft draft;
    draft.case_id = std::move(case_id);
    draft.generated_at = std::move(generated_at);
    for (const SectionId id : kAllSections) {
        const auto n = std::count_if(sections.begin(), sections.end(),
                                     [&](const InstructionSection& x) { return x.section_id == id; });
        if (n == 0) throw Error(ErrorKind::AssemblyError, "missing section " + std::string(to_string(id)));
        if (n > 1) throw Error(ErrorKind::AssemblyError, "duplicate section " + std::string(to_string(id)));
    }
    if (sections.size() != kAllSections.size()) {
        throw Error(ErrorKind::AssemblyError, "unexpected number of sections");
    }
    for (const SectionId id : kAllSections) {
        auto it = std::find_if(sections.begin(), sections.end(),
                               [&](const InstructionSection& x) { return x.section_id == id; });
        if (text::trim(it->text).empty()) {
            throw Error(ErrorKind::AssemblyError, "empty section " + std::string(to_string(id)));
        }
        draft.sections.push_back(std::move(*it));
    }
    return draft;
}

InstructionDraft regenerate_section(const InstructionDraft& draft, SectionId s, const StageOutputs& outputs,
                                    const Guidelines& guidelines, llm::LlmGateway& gateway) {
    InstructionSection fresh = generate_section(s, outputs, guidelines, gateway);
    std::vector<InstructionSection> sections = draft.sections;
    for (auto& section : sections) {
        if (section.section_id == s) section = fresh;
    }
    return assemble_instruction(draft.case_id, std::move(sections), draft.generated_at);
}

} // namespace casework::recommendations
