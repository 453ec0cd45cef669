#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgr3/embed.hpp"
#include "kgr3/kg.hpp"
#include "kgr3/llm.hpp"
#include "kgr3/reasoning.hpp"
#include "kgr3/retrieval.hpp"

namespace kgr3 {

enum class CandidateSource : std::uint8_t { kBase, kReasoned, kSupplement };
std::string_view to_string(CandidateSource source);

struct CandidateSet {
  Query query;
  std::vector<EntityIdx> members;
  std::vector<CandidateSource> sources;  // parallel to members
};

// members = ranked[0:p], then reasoned entities not yet present until n,
// then further ranked entities (position >= p) until n. Sizes clamp to |E|.
// Throws ConfigError when p > n.
CandidateSet compose_candidates(const RankedEntityList& ranked, std::span<const EntityIdx> reasoned,
                                std::size_t n, std::size_t p);

inline constexpr std::string_view kMissingEntity = "<missing-entity>";

// Single user turn listing the incomplete triple, the known entity's
// description, its neighbor facts and one "label: description" line per
// candidate. Empty sections are omitted.
std::string render_rerank_prompt(const KnowledgeGraph& graph, const ContextStore& contexts,
                                 const Query& query, std::span<const IndexedTriple> neighbor_facts,
                                 std::span<const EntityIdx> candidates);
std::vector<ChatMessage> build_rerank_prompt(const KnowledgeGraph& graph, const ContextStore& contexts,
                                             const Query& query,
                                             std::span<const IndexedTriple> neighbor_facts,
                                             const CandidateSet& candidates);

enum class MatchKind : std::uint8_t { kLabel, kAlias, kSubstring, kFallback };
std::string_view to_string(MatchKind kind);

struct MatchResult {
  EntityIdx entity = 0;
  MatchKind kind = MatchKind::kFallback;
};

// Exact label, then alias, then unique containment among the candidates;
// falls back to members[0]. Throws Error when the candidate set is empty.
MatchResult match_answer(std::string_view llm_text, const CandidateSet& candidates,
                         const KnowledgeGraph& graph, const ContextStore& contexts);

struct RerankResult {
  Query query;
  EntityIdx selected = 0;
  std::vector<EntityIdx> final_order;
  std::string llm_raw;
};

// [selected] + (members without selected) + (the base ranking without
// anything already placed). Throws Error when selected is not a member.
RerankResult reorder(const RankedEntityList& ranked, const CandidateSet& candidates,
                     EntityIdx selected);

// --- SFT dataset --------------------------------------------------------

struct SftConfig {
  std::size_t hard_negatives = 10;
  std::size_t easy_negatives = 9;
  std::size_t neighbor_limit = 3;
  std::uint64_t seed = 42;
  std::size_t max_samples = 0;  // 0 = every train triple in both directions
};

enum class CandidateRole : std::uint8_t { kGroundTruth, kHard, kEasy };

struct SftSample {
  Query query;
  std::string question;
  NeighborFacts neighbor_facts;
  std::string known_description;
  std::vector<EntityIdx> candidates;  // shuffled
  std::vector<CandidateRole> roles;   // parallel to candidates
  std::string target_label;
  std::string prompt;
};

inline constexpr std::string_view kSftInstruction =
    "Select the most appropriate entity to complete the incomplete triple from the candidate answer "
    "list. Output only the label of the selected entity.";

// Entities seen in the corrupted slot under the same relation elsewhere in
// train, minus the ground truth and other known completions of the query.
std::vector<EntityIdx> hard_negative_pool(const KnowledgeGraph& graph, const Query& query);

SftSample build_sft_sample(const KnowledgeGraph& graph, const ContextStore& contexts,
                           const Query& query, const SftConfig& config, std::uint64_t sample_seed);

// Visits samples for every train triple, tail corruption then head
// corruption, stopping after config.max_samples when non-zero.
void for_each_sft_sample(const KnowledgeGraph& graph, const ContextStore& contexts,
                         const SftConfig& config, const std::function<void(const SftSample&)>& visit);
std::vector<SftSample> build_sft_dataset(const KnowledgeGraph& graph, const ContextStore& contexts,
                                         const SftConfig& config);

// {"instruction", "input", "output"}
nlohmann::json sft_record(const SftSample& sample);
// Streams the dataset to a line-delimited file; returns the sample count.
std::size_t write_sft_dataset(const std::filesystem::path& path, const KnowledgeGraph& graph,
                              const ContextStore& contexts, const SftConfig& config);

}  // namespace kgr3
