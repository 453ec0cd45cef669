#include <doctest.h>

#include <algorithm>
#include <tuple>

#include "fixtures.hpp"
#include "kgr3/embed.hpp"
#include "kgr3/retrieval.hpp"

using namespace kgr3;
using kgr3::testing::graph_of;

TEST_SUITE("retrieval") {

TEST_CASE("same entity and relation triples come first") {
  auto g = graph_of({{"a", "r", "b"}, {"a", "r", "c"}, {"a", "r", "d"}, {"a", "r", "e"}, {"x", "r", "y"}},
                    {}, {{"a", "r", "f"}});
  const Query q{Direction::kTail, g.entity_index("a"), g.relation_index("r"), g.entity_index("f")};
  auto supports = retrieve_supporting_triples(g, nullptr, q, 3);
  REQUIRE(supports.size() == 3);
  for (const auto& s : supports) {
    CHECK(s.triple.head == q.known);
    CHECK(s.triple.relation == q.relation);
    CHECK(s.provenance == Provenance::kSameEntityRelation);
    CHECK(s.masked_slot == Direction::kTail);
  }
  CHECK(g.entity(supports[0].triple.tail) == "b");
  CHECK(g.entity(supports[2].triple.tail) == "d");
}

TEST_CASE("a relation seen once with another entity yields one support") {
  auto g = graph_of({{"a", "r", "b"}, {"a", "s", "c"}, {"c", "s", "d"}, {"d", "t", "a"}, {"b", "t", "c"},
                     {"e", "s", "a"}},
                    {}, {{"c", "r", "e"}});
  const Query q{Direction::kTail, g.entity_index("c"), g.relation_index("r"), g.entity_index("e")};
  // Exhaustive scan: train triples with relation r whose head differs from c.
  std::vector<IndexedTriple> expected;
  for (const auto& t : g.split(Split::kTrain)) {
    if (t.relation == q.relation && t.head != q.known) expected.push_back(t);
  }
  REQUIRE(expected.size() == 1);
  auto supports = retrieve_supporting_triples(g, nullptr, q, 3);
  REQUIRE(supports.size() == 1);
  CHECK(supports[0].triple == expected[0]);
  CHECK(supports[0].provenance == Provenance::kSimilarEntity);
}

TEST_CASE("similar-entity supports follow embedding similarity") {
  auto g = graph_of({{"p", "r", "x"}, {"q", "r", "y"}, {"s", "r", "z"}}, {}, {{"k", "r", "w"}});
  ScoringModel m(ModelKind::kTransE, g.entities(), g.relations(), 2);
  auto set = [&](const char* id, double a, double b) {
    auto v = m.entity(g.entity_index(id));
    v[0] = a;
    v[1] = b;
  };
  set("k", 1, 0);
  set("p", 0, 1);
  set("q", 1, 0.1);
  set("s", -1, 0);
  const Query q{Direction::kTail, g.entity_index("k"), g.relation_index("r"), g.entity_index("w")};
  auto supports = retrieve_supporting_triples(g, &m, q, 3);
  REQUIRE(supports.size() == 3);
  CHECK(g.entity(supports[0].triple.head) == "q");
  CHECK(g.entity(supports[1].triple.head) == "p");
  CHECK(g.entity(supports[2].triple.head) == "s");
  CHECK(supports[0].similarity > supports[1].similarity);
}

TEST_CASE("head queries mask the head slot") {
  auto g = graph_of({{"b", "r", "t"}, {"c", "r", "u"}}, {}, {{"a", "r", "t"}});
  const Query q{Direction::kHead, g.entity_index("t"), g.relation_index("r"), g.entity_index("a")};
  auto supports = retrieve_supporting_triples(g, nullptr, q, 3);
  REQUIRE(supports.size() == 2);
  CHECK(supports[0].masked_slot == Direction::kHead);
  CHECK(supports[0].provenance == Provenance::kSameEntityRelation);
  CHECK(g.entity(supports[0].triple.head) == "b");
  CHECK(supports[1].provenance == Provenance::kSimilarEntity);
}

TEST_CASE("k=0 and unseen relation give nothing") {
  auto g = graph_of({{"a", "r", "b"}}, {}, {{"a", "s", "b"}});
  const Query q{Direction::kTail, 0, g.relation_index("s"), 1};
  CHECK(retrieve_supporting_triples(g, nullptr, q, 3).empty());
  const Query q2{Direction::kTail, 0, g.relation_index("r"), 1};
  CHECK(retrieve_supporting_triples(g, nullptr, q2, 0).empty());
}

TEST_CASE("supports and facts never leave the train split") {
  auto g = kgr3::testing::toy_graph();
  ScoringModel m(ModelKind::kTransE, g.entities(), g.relations(), 8);
  m.initialize(3);
  for (auto split : {Split::kValid, Split::kTest}) {
    for (const auto& q : queries_for_split(g, split)) {
      for (const auto& s : retrieve_supporting_triples(g, &m, q, 10)) {
        CHECK(s.triple.split == Split::kTrain);
        CHECK(g.is_train(s.triple.head, s.triple.relation, s.triple.tail));
        CHECK_FALSE(s.triple == q.triple());
      }
      for (const auto& f : retrieve_neighbor_facts(g, q, 100)) {
        CHECK(f.split == Split::kTrain);
        CHECK_FALSE(f == q.triple());
      }
    }
  }
}

TEST_CASE("neighbor facts: isolated entity and sort oracle") {
  auto g = graph_of({{"a", "r2", "b"}, {"c", "r1", "a"}, {"a", "r1", "d"}, {"e", "r2", "a"}, {"a", "r1", "c"},
                     {"x", "r1", "y"}},
                    {}, {{"z", "r1", "x"}});
  const Query isolated{Direction::kTail, g.entity_index("z"), g.relation_index("r1"), g.entity_index("x")};
  CHECK(retrieve_neighbor_facts(g, isolated, 5).empty());

  const auto a = g.entity_index("a");
  const Query q{Direction::kTail, a, g.relation_index("r1"), g.entity_index("b")};
  std::vector<IndexedTriple> incident;
  for (const auto& t : g.split(Split::kTrain)) {
    if (t.head == a || t.tail == a) incident.push_back(t);
  }
  REQUIRE(incident.size() == 5);
  std::sort(incident.begin(), incident.end(), [&](const IndexedTriple& x, const IndexedTriple& y) {
    auto key = [&](const IndexedTriple& t) {
      return std::make_tuple(t.relation, t.head == a ? t.tail : t.head, t.head == a ? 0 : 1);
    };
    return key(x) < key(y);
  });
  auto facts = retrieve_neighbor_facts(g, q, 2);
  REQUIRE(facts.size() == 2);
  CHECK(facts[0] == incident[0]);
  CHECK(facts[1] == incident[1]);
  CHECK(g.entity(facts[0].tail) == "c");
  CHECK(g.entity(facts[1].head) == "c");
}

TEST_CASE("candidate retrieval takes a prefix of the ranking") {
  auto g = kgr3::testing::toy_graph();
  auto ctx = kgr3::testing::toy_contexts();
  ScoringModel m(ModelKind::kTransE, g.entities(), g.relations(), 4);
  m.initialize(1);
  auto ranked = rank_entities(m, queries_for_split(g, Split::kTest)[0]);
  CHECK(retrieve_candidates(ranked, g, ctx, 0).empty());
  auto all = retrieve_candidates(ranked, g, ctx, g.num_entities());
  REQUIRE(all.size() == g.num_entities());
  for (std::size_t i = 0; i < all.size(); ++i) {
    CHECK(all[i].entity == ranked.order[i]);
    CHECK(all[i].base_rank == i);
  }
  auto top = retrieve_candidates(ranked, g, ctx, 20);
  CHECK(top.size() == 20);
  CHECK(top[0].context.label == ctx.label(g.entity(ranked.order[0])));
}

}  // TEST_SUITE
