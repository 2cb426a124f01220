#pragma once

#include "casework/llm.hpp"
#include "casework/retrieval.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Agent-loop primitives built on the gateway: a ReAct search/conclude loop
// with a rigid line protocol, and chain-of-thought answering over evidence.
namespace casework::llm {

enum class ActionKind { Search, Conclude };
enum class AgentStatus { Concluded, BudgetExhausted };

struct AgentAction {
    ActionKind kind = ActionKind::Conclude;
    CorpusId corpus = CorpusId::CaseDocuments; // Search only
    std::string query;                         // Search only
    std::string answer;                        // Conclude only
};

struct AgentStep {
    std::string thought;
    AgentAction action;
    std::optional<std::string> observation; // present for every Search step
    std::vector<retrieval::SearchHit> hits;
};

struct AgentTrace {
    std::vector<AgentStep> steps;
    AgentStatus status = AgentStatus::Concluded;

    const AgentStep& conclusion() const { return steps.back(); }
    std::size_t search_count() const;
    /// Hits from every observation, first occurrence order, deduplicated by
    /// (corpus, passage_id).
    std::vector<retrieval::SearchHit> evidence() const;
};

void to_json(Json& j, const AgentTrace& trace);

using SearchTool = std::function<std::vector<retrieval::SearchHit>(std::string_view query)>;
using ToolSet = std::map<CorpusId, SearchTool>;

/// One search tool per listed corpus, each returning the top `k` hits.
ToolSet make_search_tools(const retrieval::CorpusSet& corpora, std::span<const CorpusId> which, std::size_t k);

/// Parses "Thought: ..." / "Action: search[corpus] query" /
/// "Action: conclude answer". Returns nullopt when the reply does not
/// follow the protocol.
std::optional<AgentStep> parse_agent_reply(std::string_view reply);

/// Runs independent per-step completions until the model concludes or
/// `max_steps` searches were spent, in which case a Conclude step with
/// status BudgetExhausted is appended. A malformed reply gets one reprompt
/// with a format reminder; a second one throws MalformedAction.
AgentTrace react_loop(LlmGateway& gateway, const ToolSet& tools, std::string_view task_prompt, std::size_t max_steps);

struct CotAnswer {
    std::string answer;
    std::string rationale_paragraph;
};

/// Asks for one explanatory paragraph followed by a final "ANSWER: ..." line.
CotAnswer cot_reason(LlmGateway& gateway, std::string_view question, std::span<const std::string> evidence);

/// Splits a reply whose last nonempty line is "ANSWER: ..."; throws
/// ParseError otherwise or when no rationale precedes it.
CotAnswer parse_cot_reply(std::string_view reply);

/// "[corpus/doc_id/passage_id] text" blocks, each text capped at
/// `max_chars` code points.
std::string format_hits(std::span<const retrieval::SearchHit> hits, std::size_t max_chars = 800);

} // namespace casework::llm
