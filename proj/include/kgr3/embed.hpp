#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgr3/kg.hpp"

namespace kgr3 {

enum class ModelKind : std::uint8_t { kTransE, kDistMult, kComplEx, kRotatE };

std::string_view to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view text);

struct Query {
  Direction direction = Direction::kTail;
  EntityIdx known = 0;
  RelationIdx relation = 0;
  std::optional<EntityIdx> ground_truth;

  // The complete triple this query was cut from; requires ground_truth.
  IndexedTriple triple() const;

  friend bool operator==(const Query&, const Query&) = default;
};

// Stable textual key: "<direction>\t<known>\t<relation>\t<ground truth>".
std::string query_id(const KnowledgeGraph& graph, const Query& query);

// Both prediction directions for every triple of `split`, tail query first.
std::vector<Query> queries_for_split(const KnowledgeGraph& graph, Split split);

struct TrainConfig {
  int dimension = 32;
  int epochs = 200;
  double learning_rate = 0.01;
  double margin = 1.0;
  int negatives = 1;
  std::uint64_t seed = 42;

  void validate(ModelKind kind) const;
};

// Entity rows have `dimension` reals. ComplEx and RotatE entity rows are
// interleaved (re, im) pairs. Relation rows are `dimension` reals, except for
// RotatE where a row holds dimension/2 phases in [-pi, pi).
class ScoringModel {
 public:
  ScoringModel() = default;
  ScoringModel(ModelKind kind, std::vector<EntityId> entities, std::vector<RelationId> relations,
               int dimension);

  ModelKind kind() const { return kind_; }
  int dimension() const { return dimension_; }
  int relation_width() const { return relation_width_; }
  std::size_t num_entities() const { return entities_.size(); }
  std::size_t num_relations() const { return relations_.size(); }
  const std::vector<EntityId>& entity_ids() const { return entities_; }
  const std::vector<RelationId>& relation_ids() const { return relations_; }

  std::span<const double> entity(EntityIdx idx) const;
  std::span<double> entity(EntityIdx idx);
  std::span<const double> relation(RelationIdx idx) const;
  std::span<double> relation(RelationIdx idx);
  std::span<const double> entity_parameters() const { return entity_params_; }
  std::span<double> entity_parameters() { return entity_params_; }
  std::span<const double> relation_parameters() const { return relation_params_; }
  std::span<double> relation_parameters() { return relation_params_; }

  // Higher is more plausible for every kind.
  double score(EntityIdx head, RelationIdx relation, EntityIdx tail) const;
  // Id-based overload; throws LookupError on unknown ids.
  double score(std::string_view head, std::string_view relation, std::string_view tail) const;

  // Uniform in [-6/sqrt(d), 6/sqrt(d)]; RotatE phases uniform in [-pi, pi).
  void initialize(std::uint64_t seed);
  // Re-wraps RotatE phases into [-pi, pi). No-op for other kinds.
  void wrap_phases();

  void save(const std::filesystem::path& path) const;
  static ScoringModel load(const std::filesystem::path& path);

  friend bool operator==(const ScoringModel&, const ScoringModel&) = default;

 private:
  ModelKind kind_ = ModelKind::kTransE;
  int dimension_ = 0;
  int relation_width_ = 0;
  std::vector<EntityId> entities_;
  std::vector<RelationId> relations_;
  std::vector<double> entity_params_;
  std::vector<double> relation_params_;
};

// d score / d parameters for a single triple.
struct ScoreGradient {
  std::vector<double> head;
  std::vector<double> relation;
  std::vector<double> tail;
};

ScoreGradient score_gradient(const ScoringModel& model, const IndexedTriple& triple);

struct TrainingPair {
  IndexedTriple positive;
  IndexedTriple negative;
};

// Mean over pairs of max(0, margin - f(pos) + f(neg)).
double margin_loss(const ScoringModel& model, std::span<const TrainingPair> pairs, double margin);

// Dense gradient of margin_loss with the model's parameter layout.
struct ModelGradient {
  std::vector<double> entity;
  std::vector<double> relation;
};
ModelGradient margin_loss_gradient(const ScoringModel& model, std::span<const TrainingPair> pairs,
                                   double margin);

// Draws a corrupted copy of `positive`, replacing head or tail (probability
// 1/2 each) with a uniform entity. Corruptions that are known train triples
// are redrawn a bounded number of times.
IndexedTriple sample_negative(const KnowledgeGraph& graph, const IndexedTriple& positive,
                              std::mt19937_64& rng);

struct TrainReport {
  std::vector<double> epoch_loss;
};

// Plain SGD on the margin ranking loss, single-threaded, train split in file
// order. Throws TrainingError on a non-finite loss.
ScoringModel train(const KnowledgeGraph& graph, ModelKind kind, const TrainConfig& config,
                   TrainReport* report = nullptr,
                   const std::function<void(int epoch, double loss)>& on_epoch = {});

// Runs `steps` single-pair SGD updates on an existing model.
void sgd_steps(ScoringModel& model, const KnowledgeGraph& graph, const TrainConfig& config,
               int steps, std::mt19937_64& rng);

// Cosine of two entity vectors; 0 when either has zero norm.
double entity_similarity(const ScoringModel& model, EntityIdx a, EntityIdx b);

struct RankedEntityList {
  Query query;
  std::vector<EntityIdx> order;  // best first
  std::vector<double> scores;    // parallel to order, non-increasing

  // 0-based position of every entity, indexed by EntityIdx.
  std::vector<std::uint32_t> positions() const;
};

// Scores every entity in the missing slot; descending score, ties by id.
RankedEntityList rank_entities(const ScoringModel& model, const Query& query);

// Throws Error when `order` is not a permutation of [0, num_entities).
void check_permutation(std::span<const EntityIdx> order, std::size_t num_entities,
                       std::string_view what);

// Line-delimited JSON, one object per query:
// {"direction", "known", "relation", "ground_truth", "ranking": [ids...]}
// Prefix rankings are completed with the remaining entities in id order.
std::vector<RankedEntityList> import_rankings(const std::filesystem::path& path,
                                              const KnowledgeGraph& graph);
std::vector<RankedEntityList> parse_rankings(std::istream& in, const KnowledgeGraph& graph,
                                             std::string_view source_name);
// Writes the same format; `prefix` > 0 truncates each list.
void write_rankings(const std::filesystem::path& path, const KnowledgeGraph& graph,
                    std::span<const RankedEntityList> rankings, std::size_t prefix = 0);

}  // namespace kgr3
