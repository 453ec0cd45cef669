#include "kgr3/reasoning.hpp"

#include <algorithm>
#include <cctype>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "kgr3/error.hpp"

namespace kgr3 {

namespace {

constexpr std::string_view kAnswerMarker = "The possible answers:";
constexpr std::string_view kAnswerFormat =
    "using the format '[answer1, answer2, ..., answerN]' and please start your response with "
    "'The possible answers:'. Do not output anything except the possible answers.";

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find(' ', start);
    if (end == std::string::npos) end = text.size();
    if (end > start) words.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return words;
}

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Trims whitespace plus stray list punctuation left over by the fallback split.
std::string clean_item(std::string_view item) {
  auto is_strip = [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0 || c == '[' || c == ']' || c == '"' ||
           c == '\'';
  };
  while (!item.empty() && is_strip(item.front())) item.remove_prefix(1);
  while (!item.empty() && is_strip(item.back())) item.remove_suffix(1);
  return std::string(item);
}

std::vector<std::string> split_list(std::string_view text, bool split_newlines) {
  std::vector<std::string> items;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    const bool boundary =
        i == text.size() || text[i] == ',' || (split_newlines && (text[i] == '\n' || text[i] == '\r'));
    if (!boundary) continue;
    auto item = clean_item(text.substr(start, i - start));
    if (!item.empty()) items.push_back(std::move(item));
    start = i + 1;
  }
  return items;
}

std::string described(const std::string& label, const std::string& description) {
  return description.empty() ? label : label + ": " + description;
}

Query support_query(const SupportingTriple& support) {
  const auto& t = support.triple;
  return support.masked_slot == Direction::kTail
             ? Query{Direction::kTail, t.head, t.relation, t.tail}
             : Query{Direction::kHead, t.tail, t.relation, t.head};
}

std::string task_sentence(const KnowledgeGraph& graph, const ContextStore& contexts,
                          const Query& query) {
  return "The question is to predict the " + std::string(to_string(query.direction)) +
         " entity [MASK] from the given " + render_masked_triple(graph, contexts, query, "[MASK]") +
         " by completing the sentence '" + build_question(graph, contexts, query) + " '.";
}

}  // namespace

std::string_view to_string(ReasoningMode mode) {
  return mode == ReasoningMode::kContextAware ? "context-aware" : "knowledge-only";
}

ReasoningMode parse_reasoning_mode(std::string_view text) {
  if (text == "context-aware") return ReasoningMode::kContextAware;
  if (text == "knowledge-only") return ReasoningMode::kKnowledgeOnly;
  throw ConfigError("unknown reasoning mode '" + std::string(text) + "'");
}

std::string build_question(const KnowledgeGraph& graph, const ContextStore& contexts,
                           const Query& query) {
  const auto words = split_words(verbalize_relation(graph.relation(query.relation)));
  const std::string first = words.empty() ? std::string() : words.front();
  const std::string last = words.empty() ? std::string() : words.back();
  const std::string known = contexts.label(graph.entity(query.known));
  if (query.direction == Direction::kHead) {
    return known + " is the " + last + " of what " + first + "? The answer is";
  }
  return "What is the " + last + " of " + known + "? The answer is";
}

std::string render_masked_triple(const KnowledgeGraph& graph, const ContextStore& contexts,
                                 const Query& query, std::string_view mask) {
  const std::string known = contexts.label(graph.entity(query.known));
  const std::string relation = verbalize_relation(graph.relation(query.relation));
  if (query.direction == Direction::kHead) {
    return "(" + std::string(mask) + ", " + relation + ", " + known + ")";
  }
  return "(" + known + ", " + relation + ", " + std::string(mask) + ")";
}

Demonstration build_demonstration(const KnowledgeGraph& graph, const ContextStore& contexts,
                                  const SupportingTriple& support) {
  const Query query = support_query(support);
  const auto known_ctx = contexts.lookup(graph.entity(query.known));
  const auto answer_ctx = contexts.lookup(graph.entity(*query.ground_truth));

  Demonstration demo;
  if (!known_ctx.description.empty()) {
    demo.user = known_ctx.label + ": " + known_ctx.description + " ";
  }
  demo.user += task_sentence(graph, contexts, query);
  demo.assistant = "The answer is " + answer_ctx.label + ", so the [MASK] is " + answer_ctx.label + ".";
  if (!answer_ctx.description.empty()) {
    demo.assistant += " " + answer_ctx.label + ": " + answer_ctx.description;
  }
  return demo;
}

PromptBundle build_prompt_bundle(const KnowledgeGraph& graph, const ContextStore& contexts,
                                 const Query& query, std::span<const SupportingTriple> supports) {
  PromptBundle bundle;
  for (const auto& s : supports) bundle.demonstrations.push_back(build_demonstration(graph, contexts, s));
  bundle.question = build_question(graph, contexts, query);
  bundle.query_user_text = task_sentence(graph, contexts, query);
  return bundle;
}

std::vector<ChatMessage> build_reasoning_prompt(const KnowledgeGraph& graph,
                                                const ContextStore& contexts, const Query& query,
                                                std::span<const SupportingTriple> supports,
                                                ReasoningMode mode) {
  const auto bundle = build_prompt_bundle(graph, contexts, query, supports);
  std::vector<ChatMessage> messages;
  for (const auto& demo : bundle.demonstrations) {
    messages.push_back({Role::kUser, demo.user});
    messages.push_back({Role::kAssistant, demo.assistant});
  }
  std::string final_text;
  if (mode == ReasoningMode::kKnowledgeOnly) {
    final_text = bundle.query_user_text + " Output all some possible answers based on your own knowledge, " +
                 std::string(kAnswerFormat);
  } else {
    const auto known = contexts.lookup(graph.entity(query.known));
    final_text = "Here are some materials for you to refer to:\n" +
                 described(known.label, known.description) + "\n\n" + bundle.query_user_text +
                 " Output all the possible answers you can find in the materials " +
                 std::string(kAnswerFormat) +
                 " If you cannot find any answer, please output some possible answers based on your "
                 "own knowledge.";
  }
  messages.push_back({Role::kUser, std::move(final_text)});
  return messages;
}

std::vector<std::string> parse_answers(std::string_view llm_text) {
  const auto marker = llm_text.rfind(kAnswerMarker);
  if (marker != std::string_view::npos) {
    const auto rest = llm_text.substr(marker + kAnswerMarker.size());
    const auto open = rest.find('[');
    if (open != std::string_view::npos) {
      const auto close = rest.find(']', open + 1);
      if (close != std::string_view::npos) {
        return split_list(rest.substr(open + 1, close - open - 1), false);
      }
    }
    return split_list(trim(rest), true);
  }
  return split_list(llm_text, true);
}

ReasonedAnswers postprocess(std::span<const std::string> raw, const KnowledgeGraph& graph,
                            const ContextStore& contexts, const RankedEntityList& ranked,
                            std::size_t delta) {
  ReasonedAnswers out;
  out.raw_strings.assign(raw.begin(), raw.end());
  const auto positions = ranked.positions();
  std::unordered_set<EntityIdx> seen;
  for (const auto& surface : raw) {
    const auto id = contexts.resolve(surface);
    const auto idx = id ? graph.find_entity(*id) : std::nullopt;
    if (!idx) {
      out.unresolved.push_back(surface);
      spdlog::debug("unresolved LLM answer '{}'", surface);
      continue;
    }
    if (positions.at(*idx) >= delta) {
      out.outside_window.push_back(*idx);
      continue;
    }
    if (seen.insert(*idx).second) out.entities.push_back(*idx);
  }
  return out;
}

}  // namespace kgr3
