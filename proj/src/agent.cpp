#include "casework/agent.hpp"

#include "casework/error.hpp"
#include "casework/text.hpp"

#include <set>

namespace casework::llm {

namespace {

const PromptTemplate& react_template() {
    static const PromptTemplate tmpl(
        "react_step",
        "You are an intelligent agent capable of reasoning and interpreting legal documents. Work step by step: "
        "reason about the task, search the available corpora when you need information, and conclude when the "
        "evidence is sufficient.\n"
        "\n"
        "## Task\n"
        "\n"
        "{task}\n"
        "\n"
        "## Tools\n"
        "\n"
        "{tools}"
        "- conclude <answer>: finish with your answer.\n"
        "\n"
        "## Format\n"
        "\n"
        "Reply with exactly two lines:\n"
        "Thought: <your reasoning>\n"
        "Action: search[<corpus>] <query>   or   Action: conclude <answer>\n"
        "\n"
        "## History\n"
        "\n"
        "{history}\n"
        "\n"
        "## Current step\n"
        "\n"
        "Step {step} of {max_steps}\n");
    return tmpl;
}

constexpr std::string_view kFormatReminder =
    "\nYour previous reply could not be parsed. Reply with one 'Thought:' line followed by one 'Action:' line, "
    "using search[<corpus>] <query> or conclude <answer>.\n";

std::string describe_tools(const ToolSet& tools) {
    std::string out;
    for (const auto& [corpus, _] : tools) {
        out += "- search[" + std::string(to_string(corpus)) + "] <query>: full-text search over the " +
               std::string(to_string(corpus)) + " corpus.\n";
    }
    return out;
}

std::string format_action(const AgentAction& action) {
    if (action.kind == ActionKind::Search) {
        return "search[" + std::string(to_string(action.corpus)) + "] " + action.query;
    }
    return "conclude " + action.answer;
}

std::string format_history(const std::vector<AgentStep>& steps, std::size_t elided) {
    if (steps.empty()) {
        return "(no previous steps)";
    }
    std::string out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i > 0) out += "\n";
        out += "Step " + std::to_string(i + 1) + "\n";
        out += "Thought: " + steps[i].thought + "\n";
        out += "Action: " + format_action(steps[i].action) + "\n";
        if (steps[i].observation) {
            out += "Observation: " + (i < elided ? std::string("(omitted)") : *steps[i].observation) + "\n";
        }
    }
    return out;
}

// Renders a step prompt, eliding the oldest observations and finally the task
// text until the prompt fits the gateway's prompt budget.
std::string build_step_prompt(const LlmGateway& gateway, std::string_view task, const ToolSet& tools,
                              const std::vector<AgentStep>& steps, std::size_t step, std::size_t max_steps,
                              bool reminder) {
    const std::size_t budget = gateway.prompt_budget();
    const auto render = [&](std::string_view task_text, std::size_t elided) {
        std::string prompt = render_prompt(react_template(), {{"task", std::string(task_text)},
                                                              {"tools", describe_tools(tools)},
                                                              {"history", format_history(steps, elided)},
                                                              {"step", std::to_string(step)},
                                                              {"max_steps", std::to_string(max_steps)}});
        if (reminder) prompt += kFormatReminder;
        return prompt;
    };
    for (std::size_t elided = 0; elided <= steps.size(); ++elided) {
        std::string prompt = render(task, elided);
        if (gateway.tokenizer().count(prompt) <= budget) {
            return prompt;
        }
    }
    const std::size_t overhead = gateway.tokenizer().count(render("", steps.size()));
    require(overhead < budget, "agent prompt scaffolding exceeds the context budget");
    return render(truncate_to_budget(task, budget - overhead, gateway.tokenizer()), steps.size());
}

std::string strip_label(std::string_view line, std::string_view label) {
    return std::string(text::trim(line.substr(label.size())));
}

} // namespace

std::size_t AgentTrace::search_count() const {
    std::size_t n = 0;
    for (const auto& s : steps) {
        if (s.action.kind == ActionKind::Search) ++n;
    }
    return n;
}

std::vector<retrieval::SearchHit> AgentTrace::evidence() const {
    std::vector<retrieval::SearchHit> out;
    std::set<std::pair<CorpusId, std::string>> seen;
    for (const auto& s : steps) {
        for (const auto& hit : s.hits) {
            if (seen.emplace(hit.corpus, hit.passage_id).second) {
                out.push_back(hit);
            }
        }
    }
    return out;
}

void to_json(Json& j, const AgentTrace& trace) {
    j = Json::array();
    for (const auto& s : trace.steps) {
        Json step{{"thought", s.thought}};
        if (s.action.kind == ActionKind::Search) {
            step["action"] = Json{{"type", "search"}, {"corpus", std::string(to_string(s.action.corpus))},
                                  {"query", s.action.query}};
        } else {
            step["action"] = Json{{"type", "conclude"}, {"answer", s.action.answer}};
        }
        if (s.observation) {
            step["observation_hits"] = Json::array();
            for (const auto& hit : s.hits) {
                step["observation_hits"].push_back(hit);
            }
        }
        j.push_back(std::move(step));
    }
}

ToolSet make_search_tools(const retrieval::CorpusSet& corpora, std::span<const CorpusId> which, std::size_t k) {
    ToolSet tools;
    for (const CorpusId corpus : which) {
        if (!corpora.has(corpus)) {
            continue;
        }
        tools[corpus] = [&corpora, corpus, k](std::string_view query) { return corpora.search(corpus, query, k); };
    }
    return tools;
}

std::optional<AgentStep> parse_agent_reply(std::string_view reply) {
    std::optional<std::string> thought;
    std::optional<std::string> action_text;
    for (const auto raw : text::split_lines(reply)) {
        const auto line = text::trim(raw);
        if (!thought && text::starts_with_icase(line, "thought:")) {
            thought = strip_label(line, "thought:");
        } else if (!action_text && text::starts_with_icase(line, "action:")) {
            action_text = strip_label(line, "action:");
        }
    }
    if (!action_text) {
        return std::nullopt;
    }

    AgentStep step;
    step.thought = thought.value_or("");
    const std::string_view act = *action_text;
    if (text::starts_with_icase(act, "search[")) {
        const auto close = act.find(']');
        if (close == std::string_view::npos) {
            return std::nullopt;
        }
        try {
            step.action.corpus = corpus_from_string(act.substr(7, close - 7));
        } catch (const Error&) {
            return std::nullopt;
        }
        step.action.kind = ActionKind::Search;
        step.action.query = std::string(text::trim(act.substr(close + 1)));
        if (step.action.query.empty()) {
            return std::nullopt;
        }
        return step;
    }
    if (text::starts_with_icase(act, "conclude")) {
        step.action.kind = ActionKind::Conclude;
        step.action.answer = std::string(text::trim(act.substr(8)));
        if (step.action.answer.empty()) {
            return std::nullopt;
        }
        return step;
    }
    return std::nullopt;
}

AgentTrace react_loop(LlmGateway& gateway, const ToolSet& tools, std::string_view task_prompt, std::size_t max_steps) {
    require(max_steps >= 1, "react_loop requires max_steps >= 1");
    AgentTrace trace;
    for (std::size_t step_no = 1; step_no <= max_steps; ++step_no) {
        std::optional<AgentStep> step;
        for (int attempt = 0; attempt < 2 && !step; ++attempt) {
            const std::string prompt =
                build_step_prompt(gateway, task_prompt, tools, trace.steps, step_no, max_steps, attempt > 0);
            step = parse_agent_reply(gateway.complete(prompt).text);
        }
        if (!step) {
            throw Error(ErrorKind::MalformedAction, "agent reply at step " + std::to_string(step_no) +
                                                        " did not follow the action protocol after a reprompt");
        }
        if (step->action.kind == ActionKind::Conclude) {
            trace.steps.push_back(std::move(*step));
            trace.status = AgentStatus::Concluded;
            return trace;
        }
        const auto tool = tools.find(step->action.corpus);
        if (tool == tools.end()) {
            step->observation = "The corpus " + std::string(to_string(step->action.corpus)) + " is not available.";
        } else {
            try {
                step->hits = tool->second(step->action.query);
                step->observation = step->hits.empty() ? std::string("No results.") : format_hits(step->hits);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::EmptyQuery) throw;
                step->observation = "The query has no searchable terms.";
            }
        }
        trace.steps.push_back(std::move(*step));
    }
    AgentStep forced;
    forced.thought = "Step budget exhausted before a conclusion was reached.";
    forced.action.kind = ActionKind::Conclude;
    forced.action.answer = "budget exhausted";
    trace.steps.push_back(std::move(forced));
    trace.status = AgentStatus::BudgetExhausted;
    return trace;
}

std::string format_hits(std::span<const retrieval::SearchHit> hits, std::size_t max_chars) {
    std::string out;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const auto& h = hits[i];
        std::string body = h.text.substr(0, text::prefix_bytes_for_code_points(h.text, max_chars));
        for (char& c : body) {
            if (c == '\n' || c == '\r') c = ' ';
        }
        if (i > 0) out += "\n";
        out += "[" + std::string(to_string(h.corpus)) + "/" + h.doc_id + "/" + h.passage_id + "] " + body;
    }
    return out;
}

CotAnswer parse_cot_reply(std::string_view reply) {
    const auto lines = text::split_lines(reply);
    std::size_t last = lines.size();
    while (last > 0 && text::trim(lines[last - 1]).empty()) {
        --last;
    }
    if (last == 0) {
        throw Error(ErrorKind::ParseError, "empty reasoning reply");
    }
    const auto final_line = text::trim(lines[last - 1]);
    if (!text::starts_with_icase(final_line, "answer:")) {
        throw Error(ErrorKind::ParseError, "reasoning reply lacks a final 'ANSWER:' line");
    }
    CotAnswer out;
    out.answer = strip_label(final_line, "answer:");
    std::string rationale;
    for (std::size_t i = 0; i + 1 < last; ++i) {
        if (!rationale.empty()) rationale += "\n";
        rationale += lines[i];
    }
    out.rationale_paragraph = std::string(text::trim(rationale));
    if (out.answer.empty() || out.rationale_paragraph.empty()) {
        throw Error(ErrorKind::ParseError, "reasoning reply needs both a rationale and an answer");
    }
    return out;
}

CotAnswer cot_reason(LlmGateway& gateway, std::string_view question, std::span<const std::string> evidence) {
    require(!evidence.empty(), "cot_reason needs at least one evidence passage");
    const std::string head = "## Question\n\n" + std::string(question) + "\n\n## Documents\n\n";
    const std::string tail =
        "\n\n## Instructions\n\nUsing only the documents above, reason step by step and write one paragraph "
        "explaining how the documents support your answer. Then write the final answer on the last line in the "
        "form:\nANSWER: <answer>\n";
    std::string docs;
    for (std::size_t i = 0; i < evidence.size(); ++i) {
        if (i > 0) docs += "\n";
        docs += "[" + std::to_string(i + 1) + "] " + evidence[i];
    }
    const std::size_t overhead = gateway.tokenizer().count(head + tail);
    require(overhead < gateway.prompt_budget(), "question exceeds the context budget");
    docs = truncate_to_budget(docs, gateway.prompt_budget() - overhead, gateway.tokenizer());
    return parse_cot_reply(gateway.complete(head + docs + tail).text);
}

} // namespace casework::llm
