#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgr3/embed.hpp"
#include "kgr3/kg.hpp"
#include "kgr3/llm.hpp"
#include "kgr3/retrieval.hpp"

namespace kgr3 {

enum class ReasoningMode : std::uint8_t { kKnowledgeOnly, kContextAware };

std::string_view to_string(ReasoningMode mode);
ReasoningMode parse_reasoning_mode(std::string_view text);

struct Demonstration {
  std::string user;
  std::string assistant;

  friend bool operator==(const Demonstration&, const Demonstration&) = default;
};

struct PromptBundle {
  std::vector<Demonstration> demonstrations;
  std::string query_user_text;  // task sentence for the query, without the mode-specific wrapper
  std::string question;
};

// "<label> is the <last segment> of what <first segment>? The answer is" for
// head queries, "What is the <last segment> of <label>? The answer is" for
// tail queries. Segments come from verbalize_relation.
std::string build_question(const KnowledgeGraph& graph, const ContextStore& contexts,
                           const Query& query);

// "(<head>, <verbalized relation>, <tail>)" with the masked slot as `mask`.
std::string render_masked_triple(const KnowledgeGraph& graph, const ContextStore& contexts,
                                 const Query& query, std::string_view mask);

Demonstration build_demonstration(const KnowledgeGraph& graph, const ContextStore& contexts,
                                  const SupportingTriple& support);

PromptBundle build_prompt_bundle(const KnowledgeGraph& graph, const ContextStore& contexts,
                                 const Query& query, std::span<const SupportingTriple> supports);

// Demonstrations as alternating user/assistant turns, then one user turn
// carrying the mode-specific instruction.
std::vector<ChatMessage> build_reasoning_prompt(const KnowledgeGraph& graph,
                                                const ContextStore& contexts, const Query& query,
                                                std::span<const SupportingTriple> supports,
                                                ReasoningMode mode);

// Never throws. Reads the bracketed list after the last
// "The possible answers:" marker, else splits on commas and newlines.
std::vector<std::string> parse_answers(std::string_view llm_text);

struct ReasonedAnswers {
  std::vector<std::string> raw_strings;
  std::vector<EntityIdx> entities;        // resolved, inside the window, deduplicated, LLM order
  std::vector<std::string> unresolved;    // no label or alias match
  std::vector<EntityIdx> outside_window;  // resolved but ranked at or beyond delta
};

// Resolves strings to entities (label, then alias) and keeps those ranked
// within the first `delta` positions of `ranked`.
ReasonedAnswers postprocess(std::span<const std::string> raw, const KnowledgeGraph& graph,
                            const ContextStore& contexts, const RankedEntityList& ranked,
                            std::size_t delta);

}  // namespace kgr3
