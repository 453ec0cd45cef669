#include "kgr3/retrieval.hpp"

#include <algorithm>
#include <tuple>

namespace kgr3 {

namespace {

bool is_query_triple(const Query& query, const IndexedTriple& t) {
  if (!query.ground_truth) return false;
  const auto q = query.triple();
  return q.head == t.head && q.relation == t.relation && q.tail == t.tail;
}

EntityIdx known_slot(const IndexedTriple& t, Direction masked) {
  return masked == Direction::kTail ? t.head : t.tail;
}

EntityIdx masked_entity(const IndexedTriple& t, Direction masked) {
  return masked == Direction::kTail ? t.tail : t.head;
}

}  // namespace

std::vector<SupportingTriple> retrieve_supporting_triples(const KnowledgeGraph& graph,
                                                          const ScoringModel* model,
                                                          const Query& query, std::size_t k) {
  std::vector<SupportingTriple> out;
  if (k == 0) return out;
  const auto triples = graph.triples();
  const Direction masked = query.direction;

  auto same = masked == Direction::kTail ? graph.by_head_relation(query.known, query.relation)
                                         : graph.by_relation_tail(query.relation, query.known);
  std::vector<IndexedTriple> first;
  for (auto pos : same) {
    const auto& t = triples[pos];
    if (t.split != Split::kTrain || is_query_triple(query, t)) continue;
    first.push_back(t);
  }
  std::sort(first.begin(), first.end(), [masked](const IndexedTriple& a, const IndexedTriple& b) {
    return masked_entity(a, masked) < masked_entity(b, masked);
  });
  for (const auto& t : first) {
    if (out.size() == k) return out;
    out.push_back({t, masked, Provenance::kSameEntityRelation, 1.0});
  }
  if (out.size() == k) return out;

  std::vector<SupportingTriple> similar;
  for (auto pos : graph.by_relation(query.relation)) {
    const auto& t = triples[pos];
    if (t.split != Split::kTrain || known_slot(t, masked) == query.known) continue;
    if (is_query_triple(query, t)) continue;
    const double sim = model ? entity_similarity(*model, known_slot(t, masked), query.known) : 0.0;
    similar.push_back({t, masked, Provenance::kSimilarEntity, sim});
  }
  std::sort(similar.begin(), similar.end(),
            [masked](const SupportingTriple& a, const SupportingTriple& b) {
              return std::make_tuple(-a.similarity, known_slot(a.triple, masked),
                                     masked_entity(a.triple, masked)) <
                     std::make_tuple(-b.similarity, known_slot(b.triple, masked),
                                     masked_entity(b.triple, masked));
            });
  for (const auto& st : similar) {
    if (out.size() == k) break;
    out.push_back(st);
  }
  return out;
}

std::vector<CandidateAnswer> retrieve_candidates(const RankedEntityList& ranked,
                                                 const KnowledgeGraph& graph,
                                                 const ContextStore& contexts, std::size_t n) {
  std::vector<CandidateAnswer> out;
  const std::size_t count = std::min(n, ranked.order.size());
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto e = ranked.order[i];
    out.push_back({e, i, contexts.lookup(graph.entity(e))});
  }
  return out;
}

NeighborFacts retrieve_neighbor_facts(const KnowledgeGraph& graph, const Query& query,
                                      std::size_t limit) {
  NeighborFacts facts;
  const auto triples = graph.triples();
  for (auto pos : graph.by_entity(query.known)) {
    const auto& t = triples[pos];
    if (t.split != Split::kTrain || is_query_triple(query, t)) continue;
    facts.push_back(t);
  }
  const auto known = query.known;
  auto sort_key = [known](const IndexedTriple& t) {
    const EntityIdx neighbor = t.head == known ? t.tail : t.head;
    // Known entity in head position first when relation and neighbor tie.
    return std::make_tuple(t.relation, neighbor, t.head == known ? 0 : 1);
  };
  std::sort(facts.begin(), facts.end(), [&](const IndexedTriple& a, const IndexedTriple& b) {
    return sort_key(a) < sort_key(b);
  });
  if (facts.size() > limit) facts.resize(limit);
  return facts;
}

}  // namespace kgr3
