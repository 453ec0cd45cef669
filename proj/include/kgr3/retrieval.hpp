#pragma once

#include <cstddef>
#include <vector>

#include "kgr3/embed.hpp"
#include "kgr3/kg.hpp"

namespace kgr3 {

enum class Provenance : std::uint8_t { kSameEntityRelation, kSimilarEntity };

struct SupportingTriple {
  IndexedTriple triple;
  Direction masked_slot = Direction::kTail;
  Provenance provenance = Provenance::kSameEntityRelation;
  double similarity = 1.0;  // cosine between the known-slot entity and the query's known entity

  friend bool operator==(const SupportingTriple&, const SupportingTriple&) = default;
};

struct CandidateAnswer {
  EntityIdx entity = 0;
  std::size_t base_rank = 0;  // 0-based position in the base ranking
  EntityContext context;
};

using NeighborFacts = std::vector<IndexedTriple>;

// Train triples sharing the query's known entity and relation in the same
// slot come first (ordered by the masked entity's id); the remainder is filled
// with same-relation train triples ordered by embedding similarity of their
// known-slot entity (descending, then id). Never returns the query triple.
// A null `model` treats every similarity as 0.
std::vector<SupportingTriple> retrieve_supporting_triples(const KnowledgeGraph& graph,
                                                          const ScoringModel* model,
                                                          const Query& query, std::size_t k);

// First n entries of the ranking joined with their contexts.
std::vector<CandidateAnswer> retrieve_candidates(const RankedEntityList& ranked,
                                                 const KnowledgeGraph& graph,
                                                 const ContextStore& contexts, std::size_t n);

// Up to `limit` train triples incident to the known entity, excluding the
// query triple, ordered by (relation id, neighbor id).
NeighborFacts retrieve_neighbor_facts(const KnowledgeGraph& graph, const Query& query,
                                      std::size_t limit);

}  // namespace kgr3
