#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

namespace kgr3 {

using EntityId = std::string;
using RelationId = std::string;

// Dense indices into a KnowledgeGraph's sorted id tables. Index order equals
// ascending id order, so comparing indices is the same as comparing ids.
using EntityIdx = std::uint32_t;
using RelationIdx = std::uint32_t;

struct Triple {
  EntityId head;
  RelationId relation;
  EntityId tail;

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

enum class Split : std::uint8_t { kTrain, kValid, kTest };

// kTail predicts t in (known, r, ?); kHead predicts h in (?, r, known).
enum class Direction : std::uint8_t { kHead, kTail };

std::string_view to_string(Direction direction);
std::string_view to_string(Split split);
Direction parse_direction(std::string_view text);

struct IndexedTriple {
  EntityIdx head = 0;
  RelationIdx relation = 0;
  EntityIdx tail = 0;
  Split split = Split::kTrain;

  friend auto operator<=>(const IndexedTriple&, const IndexedTriple&) = default;
};

// Reads `head<TAB>relation<TAB>tail` lines. Blank lines are skipped; any other
// line without exactly three fields raises ParseError naming the line.
std::vector<Triple> parse_triples(std::istream& in, std::string_view source_name);
std::vector<Triple> load_triples(const std::filesystem::path& path);

class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;

  static KnowledgeGraph build(const std::vector<Triple>& train,
                              const std::vector<Triple>& valid,
                              const std::vector<Triple>& test);
  // Loads train.txt, valid.txt and test.txt from a dataset directory.
  static KnowledgeGraph load_dir(const std::filesystem::path& dir);

  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  const std::vector<EntityId>& entities() const { return entities_; }
  const std::vector<RelationId>& relations() const { return relations_; }
  const EntityId& entity(EntityIdx idx) const { return entities_.at(idx); }
  const RelationId& relation(RelationIdx idx) const { return relations_.at(idx); }

  std::optional<EntityIdx> find_entity(std::string_view id) const;
  std::optional<RelationIdx> find_relation(std::string_view id) const;
  // Throwing variants (LookupError).
  EntityIdx entity_index(std::string_view id) const;
  RelationIdx relation_index(std::string_view id) const;

  // All triples: train, then valid, then test, each in file order.
  std::span<const IndexedTriple> triples() const { return triples_; }
  std::span<const IndexedTriple> split(Split split) const;
  Triple to_triple(const IndexedTriple& triple) const;

  // Index lookups return positions into triples(), ascending.
  std::span<const std::uint32_t> by_head_relation(EntityIdx head, RelationIdx relation) const;
  std::span<const std::uint32_t> by_relation_tail(RelationIdx relation, EntityIdx tail) const;
  std::span<const std::uint32_t> by_relation(RelationIdx relation) const;
  std::span<const std::uint32_t> by_entity(EntityIdx entity) const;

  // Membership in train ∪ valid ∪ test.
  bool is_true(EntityIdx head, RelationIdx relation, EntityIdx tail) const;
  bool is_train(EntityIdx head, RelationIdx relation, EntityIdx tail) const;

  // Canonical text rendering of every index, for determinism checks.
  std::string dump_indices() const;

 private:
  std::uint64_t key(EntityIdx head, RelationIdx relation, EntityIdx tail) const;

  std::vector<EntityId> entities_;
  std::vector<RelationId> relations_;
  std::unordered_map<std::string, EntityIdx> entity_lookup_;
  std::unordered_map<std::string, RelationIdx> relation_lookup_;

  std::vector<IndexedTriple> triples_;
  std::size_t train_end_ = 0;
  std::size_t valid_end_ = 0;

  std::map<std::pair<EntityIdx, RelationIdx>, std::vector<std::uint32_t>> head_relation_;
  std::map<std::pair<RelationIdx, EntityIdx>, std::vector<std::uint32_t>> relation_tail_;
  std::vector<std::vector<std::uint32_t>> relation_;
  std::vector<std::vector<std::uint32_t>> entity_;
  std::unordered_set<std::uint64_t> all_true_;
  std::unordered_set<std::uint64_t> train_true_;
};

struct EntityContext {
  EntityId entity;
  std::string label;
  std::string description;
  std::vector<std::string> aliases;

  friend bool operator==(const EntityContext&, const EntityContext&) = default;
};

// Lowercase (ASCII), trim, collapse internal whitespace, drop surrounding
// quotes and trailing punctuation.
std::string normalize_surface(std::string_view text);

// "/a/b_c./d/e" -> "a b_c d e"; "_hypernym" -> "hypernym".
std::string verbalize_relation(std::string_view relation);

class ContextStore {
 public:
  ContextStore() = default;
  // Throws Error on a duplicate entity id.
  explicit ContextStore(std::vector<EntityContext> contexts);

  // JSON object keyed by entity id: {"label", "description", "aliases"}.
  static ContextStore parse(std::string_view json_text);
  static ContextStore load(const std::filesystem::path& path);

  // Entities absent from the store get label = id and nothing else.
  EntityContext lookup(std::string_view id) const;
  std::string label(std::string_view id) const;
  std::string description(std::string_view id) const;
  const EntityContext* find(std::string_view id) const;

  // Label match wins over alias match. Input need not be normalized.
  std::optional<EntityId> resolve(std::string_view surface) const;
  std::optional<EntityId> resolve_label(std::string_view surface) const;
  std::optional<EntityId> resolve_alias(std::string_view surface) const;

  ContextStore without_descriptions() const;

  std::size_t size() const { return contexts_.size(); }
  std::size_t collisions() const { return collisions_; }
  const std::map<EntityId, EntityContext, std::less<>>& entries() const { return contexts_; }

 private:
  void build_reverse_maps();

  std::map<EntityId, EntityContext, std::less<>> contexts_;
  std::unordered_map<std::string, EntityId> by_label_;
  std::unordered_map<std::string, EntityId> by_alias_;
  std::size_t collisions_ = 0;
};

}  // namespace kgr3
