#include "kgr3/embed.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "kgr3/error.hpp"

namespace kgr3 {

namespace {

constexpr char kCheckpointMagic[8] = {'K', 'G', 'R', '3', 'E', 'M', 'B', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr int kNegativeRedraws = 10;

bool is_complex(ModelKind kind) { return kind == ModelKind::kComplEx || kind == ModelKind::kRotatE; }

double wrap_phase(double phase) {
  constexpr double kPi = std::numbers::pi;
  double wrapped = std::fmod(phase + kPi, 2.0 * kPi);
  if (wrapped < 0) wrapped += 2.0 * kPi;
  wrapped -= kPi;
  // fmod can land exactly on +pi after rounding.
  if (wrapped >= kPi) wrapped = -kPi;
  return wrapped;
}

double l2_norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

// Writes d score / d (head, relation, tail) into the three output spans.
void accumulate_score_gradient(ModelKind kind, std::span<const double> h, std::span<const double> r,
                               std::span<const double> t, std::span<double> gh,
                               std::span<double> gr, std::span<double> gt, double weight) {
  const std::size_t d = h.size();
  switch (kind) {
    case ModelKind::kTransE: {
      std::vector<double> residual(d);
      for (std::size_t i = 0; i < d; ++i) residual[i] = h[i] + r[i] - t[i];
      const double norm = l2_norm(residual);
      if (norm == 0.0) return;
      for (std::size_t i = 0; i < d; ++i) {
        const double g = weight * residual[i] / norm;
        gh[i] -= g;
        gr[i] -= g;
        gt[i] += g;
      }
      return;
    }
    case ModelKind::kDistMult:
      for (std::size_t i = 0; i < d; ++i) {
        gh[i] += weight * r[i] * t[i];
        gr[i] += weight * h[i] * t[i];
        gt[i] += weight * h[i] * r[i];
      }
      return;
    case ModelKind::kComplEx:
      for (std::size_t i = 0; i + 1 < d; i += 2) {
        const double a = h[i], b = h[i + 1];
        const double c = r[i], dd = r[i + 1];
        const double e = t[i], f = t[i + 1];
        gh[i] += weight * (c * e + dd * f);
        gh[i + 1] += weight * (c * f - dd * e);
        gr[i] += weight * (a * e + b * f);
        gr[i + 1] += weight * (a * f - b * e);
        gt[i] += weight * (a * c - b * dd);
        gt[i + 1] += weight * (a * dd + b * c);
      }
      return;
    case ModelKind::kRotatE: {
      const std::size_t k = d / 2;
      std::vector<double> ure(k), uim(k);
      double sum = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        const double cs = std::cos(r[j]), sn = std::sin(r[j]);
        ure[j] = h[2 * j] * cs - h[2 * j + 1] * sn - t[2 * j];
        uim[j] = h[2 * j] * sn + h[2 * j + 1] * cs - t[2 * j + 1];
        sum += ure[j] * ure[j] + uim[j] * uim[j];
      }
      const double norm = std::sqrt(sum);
      if (norm == 0.0) return;
      for (std::size_t j = 0; j < k; ++j) {
        const double cs = std::cos(r[j]), sn = std::sin(r[j]);
        const double a = h[2 * j], b = h[2 * j + 1];
        const double w = weight / norm;
        gh[2 * j] -= w * (ure[j] * cs + uim[j] * sn);
        gh[2 * j + 1] -= w * (-ure[j] * sn + uim[j] * cs);
        gt[2 * j] += w * ure[j];
        gt[2 * j + 1] += w * uim[j];
        gr[j] -= w * (ure[j] * (-a * sn - b * cs) + uim[j] * (a * cs - b * sn));
      }
      return;
    }
  }
}

double raw_score(ModelKind kind, std::span<const double> h, std::span<const double> r,
                 std::span<const double> t) {
  const std::size_t d = h.size();
  switch (kind) {
    case ModelKind::kTransE: {
      double sum = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double v = h[i] + r[i] - t[i];
        sum += v * v;
      }
      return -std::sqrt(sum);
    }
    case ModelKind::kDistMult: {
      double sum = 0.0;
      for (std::size_t i = 0; i < d; ++i) sum += h[i] * r[i] * t[i];
      return sum;
    }
    case ModelKind::kComplEx: {
      double sum = 0.0;
      for (std::size_t i = 0; i + 1 < d; i += 2) {
        const double a = h[i], b = h[i + 1], c = r[i], dd = r[i + 1], e = t[i], f = t[i + 1];
        sum += (a * c - b * dd) * e + (a * dd + b * c) * f;
      }
      return sum;
    }
    case ModelKind::kRotatE: {
      double sum = 0.0;
      for (std::size_t j = 0; j < d / 2; ++j) {
        const double cs = std::cos(r[j]), sn = std::sin(r[j]);
        const double re = h[2 * j] * cs - h[2 * j + 1] * sn - t[2 * j];
        const double im = h[2 * j] * sn + h[2 * j + 1] * cs - t[2 * j + 1];
        sum += re * re + im * im;
      }
      return -std::sqrt(sum);
    }
  }
  return 0.0;
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError("truncated model checkpoint");
  return value;
}

void write_ids(std::ostream& out, const std::vector<std::string>& ids) {
  for (const auto& id : ids) {
    write_pod(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
}

std::vector<std::string> read_ids(std::istream& in, std::uint64_t count) {
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto len = read_pod<std::uint32_t>(in);
    std::string id(len, '\0');
    in.read(id.data(), len);
    if (!in) throw ParseError("truncated model checkpoint id table");
    ids.push_back(std::move(id));
  }
  return ids;
}

}  // namespace

std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kTransE:
      return "TransE";
    case ModelKind::kDistMult:
      return "DistMult";
    case ModelKind::kComplEx:
      return "ComplEx";
    case ModelKind::kRotatE:
      return "RotatE";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (lower == "transe") return ModelKind::kTransE;
  if (lower == "distmult") return ModelKind::kDistMult;
  if (lower == "complex") return ModelKind::kComplEx;
  if (lower == "rotate") return ModelKind::kRotatE;
  throw ConfigError("unknown model kind '" + std::string(text) + "'");
}

IndexedTriple Query::triple() const {
  if (!ground_truth) throw Error("query has no ground truth");
  return direction == Direction::kTail
             ? IndexedTriple{known, relation, *ground_truth, Split::kTrain}
             : IndexedTriple{*ground_truth, relation, known, Split::kTrain};
}

std::string query_id(const KnowledgeGraph& graph, const Query& query) {
  std::string id(to_string(query.direction));
  id += '\t';
  id += graph.entity(query.known);
  id += '\t';
  id += graph.relation(query.relation);
  id += '\t';
  if (query.ground_truth) id += graph.entity(*query.ground_truth);
  return id;
}

std::vector<Query> queries_for_split(const KnowledgeGraph& graph, Split split) {
  std::vector<Query> queries;
  for (const auto& t : graph.split(split)) {
    queries.push_back({Direction::kTail, t.head, t.relation, t.tail});
    queries.push_back({Direction::kHead, t.tail, t.relation, t.head});
  }
  return queries;
}

void TrainConfig::validate(ModelKind kind) const {
  if (dimension <= 0 || epochs < 0 || learning_rate <= 0 || margin <= 0 || negatives <= 0) {
    throw ConfigError("train config: dimension, learning rate, margin and negatives must be positive");
  }
  if (is_complex(kind) && dimension % 2 != 0) {
    throw ConfigError("train config: " + std::string(to_string(kind)) + " needs an even dimension");
  }
}

ScoringModel::ScoringModel(ModelKind kind, std::vector<EntityId> entities,
                           std::vector<RelationId> relations, int dimension)
    : kind_(kind),
      dimension_(dimension),
      relation_width_(kind == ModelKind::kRotatE ? dimension / 2 : dimension),
      entities_(std::move(entities)),
      relations_(std::move(relations)) {
  if (dimension <= 0) throw ConfigError("model dimension must be positive");
  if (is_complex(kind) && dimension % 2 != 0) throw ConfigError("complex models need an even dimension");
  entity_params_.assign(entities_.size() * static_cast<std::size_t>(dimension_), 0.0);
  relation_params_.assign(relations_.size() * static_cast<std::size_t>(relation_width_), 0.0);
}

std::span<const double> ScoringModel::entity(EntityIdx idx) const {
  return std::span<const double>(entity_params_).subspan(static_cast<std::size_t>(idx) * dimension_, dimension_);
}
std::span<double> ScoringModel::entity(EntityIdx idx) {
  return std::span<double>(entity_params_).subspan(static_cast<std::size_t>(idx) * dimension_, dimension_);
}
std::span<const double> ScoringModel::relation(RelationIdx idx) const {
  return std::span<const double>(relation_params_)
      .subspan(static_cast<std::size_t>(idx) * relation_width_, relation_width_);
}
std::span<double> ScoringModel::relation(RelationIdx idx) {
  return std::span<double>(relation_params_)
      .subspan(static_cast<std::size_t>(idx) * relation_width_, relation_width_);
}

double ScoringModel::score(EntityIdx head, RelationIdx relation_idx, EntityIdx tail) const {
  return raw_score(kind_, entity(head), relation(relation_idx), entity(tail));
}

double ScoringModel::score(std::string_view head, std::string_view relation_id,
                           std::string_view tail) const {
  auto find = [](const std::vector<std::string>& ids, std::string_view id, const char* what) {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) {
      throw LookupError(std::string("unknown ") + what + " id '" + std::string(id) + "'");
    }
    return static_cast<std::uint32_t>(it - ids.begin());
  };
  return score(find(entities_, head, "entity"), find(relations_, relation_id, "relation"),
               find(entities_, tail, "entity"));
}

void ScoringModel::initialize(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double bound = 6.0 / std::sqrt(static_cast<double>(dimension_));
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (double& x : entity_params_) x = uniform(rng);
  if (kind_ == ModelKind::kRotatE) {
    std::uniform_real_distribution<double> phase(-std::numbers::pi, std::numbers::pi);
    for (double& x : relation_params_) x = phase(rng);
  } else {
    for (double& x : relation_params_) x = uniform(rng);
  }
}

void ScoringModel::wrap_phases() {
  if (kind_ != ModelKind::kRotatE) return;
  for (double& x : relation_params_) x = wrap_phase(x);
}

void ScoringModel::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write model checkpoint " + path.string());
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  write_pod(out, kCheckpointVersion);
  write_pod(out, static_cast<std::uint8_t>(kind_));
  write_pod(out, static_cast<std::uint32_t>(dimension_));
  write_pod(out, static_cast<std::uint64_t>(entities_.size()));
  write_pod(out, static_cast<std::uint64_t>(relations_.size()));
  write_ids(out, entities_);
  write_ids(out, relations_);
  out.write(reinterpret_cast<const char*>(entity_params_.data()),
            static_cast<std::streamsize>(entity_params_.size() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(relation_params_.data()),
            static_cast<std::streamsize>(relation_params_.size() * sizeof(double)));
  if (!out) throw Error("failed writing model checkpoint " + path.string());
}

ScoringModel ScoringModel::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open model checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0) {
    throw ParseError(path.string() + " is not a model checkpoint");
  }
  if (read_pod<std::uint32_t>(in) != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version in " + path.string());
  }
  auto kind_raw = read_pod<std::uint8_t>(in);
  if (kind_raw > static_cast<std::uint8_t>(ModelKind::kRotatE)) throw ParseError("bad model kind");
  auto dim = read_pod<std::uint32_t>(in);
  auto num_entities = read_pod<std::uint64_t>(in);
  auto num_relations = read_pod<std::uint64_t>(in);
  auto entities = read_ids(in, num_entities);
  auto relations = read_ids(in, num_relations);
  ScoringModel model(static_cast<ModelKind>(kind_raw), std::move(entities), std::move(relations),
                     static_cast<int>(dim));
  in.read(reinterpret_cast<char*>(model.entity_params_.data()),
          static_cast<std::streamsize>(model.entity_params_.size() * sizeof(double)));
  in.read(reinterpret_cast<char*>(model.relation_params_.data()),
          static_cast<std::streamsize>(model.relation_params_.size() * sizeof(double)));
  if (!in) throw ParseError("truncated model checkpoint " + path.string());
  return model;
}

ScoreGradient score_gradient(const ScoringModel& model, const IndexedTriple& triple) {
  ScoreGradient grad;
  grad.head.assign(model.dimension(), 0.0);
  grad.relation.assign(model.relation_width(), 0.0);
  grad.tail.assign(model.dimension(), 0.0);
  accumulate_score_gradient(model.kind(), model.entity(triple.head), model.relation(triple.relation),
                            model.entity(triple.tail), grad.head, grad.relation, grad.tail, 1.0);
  return grad;
}

double margin_loss(const ScoringModel& model, std::span<const TrainingPair> pairs, double margin) {
  if (pairs.empty()) return 0.0;
  double total = 0.0;
  for (const auto& p : pairs) {
    const double pos = model.score(p.positive.head, p.positive.relation, p.positive.tail);
    const double neg = model.score(p.negative.head, p.negative.relation, p.negative.tail);
    total += std::max(0.0, margin - pos + neg);
  }
  return total / static_cast<double>(pairs.size());
}

namespace {

void add_triple_gradient(const ScoringModel& model, const IndexedTriple& t, double weight,
                         ModelGradient& grad) {
  const std::size_t d = model.dimension();
  const std::size_t w = model.relation_width();
  std::span<double> gh(grad.entity.data() + t.head * d, d);
  std::span<double> gt(grad.entity.data() + t.tail * d, d);
  std::span<double> gr(grad.relation.data() + t.relation * w, w);
  if (t.head != t.tail) {
    accumulate_score_gradient(model.kind(), model.entity(t.head), model.relation(t.relation),
                              model.entity(t.tail), gh, gr, gt, weight);
    return;
  }
  std::vector<double> scratch_h(d, 0.0), scratch_t(d, 0.0);
  accumulate_score_gradient(model.kind(), model.entity(t.head), model.relation(t.relation),
                            model.entity(t.tail), scratch_h, gr, scratch_t, weight);
  for (std::size_t i = 0; i < d; ++i) gh[i] += scratch_h[i] + scratch_t[i];
}

}  // namespace

ModelGradient margin_loss_gradient(const ScoringModel& model, std::span<const TrainingPair> pairs,
                                   double margin) {
  ModelGradient grad;
  grad.entity.assign(model.entity_parameters().size(), 0.0);
  grad.relation.assign(model.relation_parameters().size(), 0.0);
  if (pairs.empty()) return grad;
  const double scale = 1.0 / static_cast<double>(pairs.size());
  for (const auto& p : pairs) {
    const double pos = model.score(p.positive.head, p.positive.relation, p.positive.tail);
    const double neg = model.score(p.negative.head, p.negative.relation, p.negative.tail);
    if (margin - pos + neg <= 0.0) continue;
    add_triple_gradient(model, p.positive, -scale, grad);
    add_triple_gradient(model, p.negative, scale, grad);
  }
  return grad;
}

IndexedTriple sample_negative(const KnowledgeGraph& graph, const IndexedTriple& positive,
                              std::mt19937_64& rng) {
  std::uniform_int_distribution<EntityIdx> pick(0, static_cast<EntityIdx>(graph.num_entities() - 1));
  std::bernoulli_distribution corrupt_head(0.5);
  IndexedTriple negative = positive;
  for (int attempt = 0; attempt <= kNegativeRedraws; ++attempt) {
    negative = positive;
    if (corrupt_head(rng)) {
      negative.head = pick(rng);
    } else {
      negative.tail = pick(rng);
    }
    if (!graph.is_train(negative.head, negative.relation, negative.tail)) break;
  }
  return negative;
}

namespace {

// One SGD update on a single (positive, negative) pair. Returns the hinge
// value measured before the update.
double sgd_update(ScoringModel& model, const TrainingPair& pair, const TrainConfig& config,
                  ModelGradient& scratch) {
  const auto& pos = pair.positive;
  const auto& neg = pair.negative;
  const double loss = config.margin - model.score(pos.head, pos.relation, pos.tail) +
                      model.score(neg.head, neg.relation, neg.tail);
  if (!std::isfinite(loss)) return loss;
  if (loss <= 0.0) return 0.0;

  const std::size_t d = model.dimension();
  const std::size_t w = model.relation_width();
  EntityIdx touched[4] = {pos.head, pos.tail, neg.head, neg.tail};
  RelationIdx rels[2] = {pos.relation, neg.relation};
  for (auto e : touched) std::fill_n(scratch.entity.begin() + e * d, d, 0.0);
  for (auto r : rels) std::fill_n(scratch.relation.begin() + r * w, w, 0.0);
  add_triple_gradient(model, pos, -1.0, scratch);
  add_triple_gradient(model, neg, 1.0, scratch);

  std::sort(std::begin(touched), std::end(touched));
  auto* touched_end = std::unique(std::begin(touched), std::end(touched));
  for (auto* it = std::begin(touched); it != touched_end; ++it) {
    auto row = model.entity(*it);
    for (std::size_t i = 0; i < d; ++i) row[i] -= config.learning_rate * scratch.entity[*it * d + i];
  }
  const std::size_t num_rels = rels[0] == rels[1] ? 1 : 2;
  for (std::size_t k = 0; k < num_rels; ++k) {
    auto row = model.relation(rels[k]);
    for (std::size_t i = 0; i < w; ++i) row[i] -= config.learning_rate * scratch.relation[rels[k] * w + i];
  }
  model.wrap_phases();
  return loss;
}

}  // namespace

ScoringModel train(const KnowledgeGraph& graph, ModelKind kind, const TrainConfig& config,
                   TrainReport* report, const std::function<void(int, double)>& on_epoch) {
  config.validate(kind);
  auto train_split = graph.split(Split::kTrain);
  if (train_split.empty()) throw TrainingError("cannot train on an empty train split");

  ScoringModel model(kind, graph.entities(), graph.relations(), config.dimension);
  model.initialize(config.seed);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  ModelGradient scratch{std::vector<double>(model.entity_parameters().size(), 0.0),
                        std::vector<double>(model.relation_parameters().size(), 0.0)};

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& positive : train_split) {
      for (int j = 0; j < config.negatives; ++j) {
        TrainingPair pair{positive, sample_negative(graph, positive, rng)};
        const double loss = sgd_update(model, pair, config, scratch);
        if (!std::isfinite(loss)) {
          const auto t = graph.to_triple(positive);
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + " on triple (" +
                              t.head + ", " + t.relation + ", " + t.tail + ")");
        }
        total += loss;
        ++count;
      }
    }
    const double mean = total / static_cast<double>(count);
    if (report) report->epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
    spdlog::debug("{} epoch {} loss {:.6f}", to_string(kind), epoch, mean);
  }
  return model;
}

void sgd_steps(ScoringModel& model, const KnowledgeGraph& graph, const TrainConfig& config, int steps,
               std::mt19937_64& rng) {
  auto train_split = graph.split(Split::kTrain);
  if (train_split.empty()) throw TrainingError("cannot train on an empty train split");
  ModelGradient scratch{std::vector<double>(model.entity_parameters().size(), 0.0),
                        std::vector<double>(model.relation_parameters().size(), 0.0)};
  for (int step = 0; step < steps; ++step) {
    const auto& positive = train_split[static_cast<std::size_t>(step) % train_split.size()];
    TrainingPair pair{positive, sample_negative(graph, positive, rng)};
    if (!std::isfinite(sgd_update(model, pair, config, scratch))) {
      throw TrainingError("non-finite loss at step " + std::to_string(step));
    }
  }
}

double entity_similarity(const ScoringModel& model, EntityIdx a, EntityIdx b) {
  auto va = model.entity(a);
  auto vb = model.entity(b);
  const double na = l2_norm(va);
  const double nb = l2_norm(vb);
  if (na == 0.0 || nb == 0.0) return 0.0;
  const double dot = std::inner_product(va.begin(), va.end(), vb.begin(), 0.0);
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

std::vector<std::uint32_t> RankedEntityList::positions() const {
  std::vector<std::uint32_t> pos(order.size());
  for (std::uint32_t i = 0; i < order.size(); ++i) pos.at(order[i]) = i;
  return pos;
}

RankedEntityList rank_entities(const ScoringModel& model, const Query& query) {
  const auto n = static_cast<EntityIdx>(model.num_entities());
  std::vector<double> scores(n);
  for (EntityIdx e = 0; e < n; ++e) {
    scores[e] = query.direction == Direction::kTail ? model.score(query.known, query.relation, e)
                                                    : model.score(e, query.relation, query.known);
  }
  RankedEntityList ranked;
  ranked.query = query;
  ranked.order.resize(n);
  std::iota(ranked.order.begin(), ranked.order.end(), EntityIdx{0});
  std::stable_sort(ranked.order.begin(), ranked.order.end(),
                   [&scores](EntityIdx a, EntityIdx b) { return scores[a] > scores[b]; });
  ranked.scores.reserve(n);
  for (auto e : ranked.order) ranked.scores.push_back(scores[e]);
  return ranked;
}

void check_permutation(std::span<const EntityIdx> order, std::size_t num_entities,
                       std::string_view what) {
  if (order.size() != num_entities) {
    throw Error(std::string(what) + ": ordering has " + std::to_string(order.size()) +
                " entries, expected " + std::to_string(num_entities));
  }
  std::vector<bool> seen(num_entities, false);
  for (auto e : order) {
    if (e >= num_entities || seen[e]) {
      throw Error(std::string(what) + ": ordering is not a permutation of the entity set");
    }
    seen[e] = true;
  }
}

std::vector<RankedEntityList> parse_rankings(std::istream& in, const KnowledgeGraph& graph,
                                             std::string_view source_name) {
  std::vector<RankedEntityList> out;
  std::string line;
  std::size_t line_number = 0;
  const std::size_t n = graph.num_entities();
  while (std::getline(in, line)) {
    ++line_number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string(source_name) + ":" + std::to_string(line_number) + ": " + e.what());
    }
    RankedEntityList ranked;
    try {
      ranked.query.direction = parse_direction(record.at("direction").get<std::string>());
      ranked.query.known = graph.entity_index(record.at("known").get<std::string>());
      ranked.query.relation = graph.relation_index(record.at("relation").get<std::string>());
      if (auto it = record.find("ground_truth"); it != record.end() && !it->is_null()) {
        ranked.query.ground_truth = graph.entity_index(it->get<std::string>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string(source_name) + ":" + std::to_string(line_number) + ": " + e.what());
    }
    const auto qid = query_id(graph, ranked.query);
    std::vector<bool> seen(n, false);
    for (const auto& item : record.at("ranking")) {
      const auto id = item.get<std::string>();
      auto idx = graph.find_entity(id);
      if (!idx) throw LookupError("query '" + qid + "': unknown entity id '" + id + "' in ranking");
      if (seen[*idx]) throw Error("query '" + qid + "': entity '" + id + "' listed twice (duplicate)");
      seen[*idx] = true;
      ranked.order.push_back(*idx);
    }
    for (EntityIdx e = 0; e < n; ++e) {
      if (!seen[e]) ranked.order.push_back(e);
    }
    ranked.scores.resize(n);
    for (std::size_t i = 0; i < n; ++i) ranked.scores[i] = -static_cast<double>(i);
    out.push_back(std::move(ranked));
  }
  return out;
}

std::vector<RankedEntityList> import_rankings(const std::filesystem::path& path,
                                              const KnowledgeGraph& graph) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open rankings file " + path.string());
  return parse_rankings(in, graph, path.string());
}

void write_rankings(const std::filesystem::path& path, const KnowledgeGraph& graph,
                    std::span<const RankedEntityList> rankings, std::size_t prefix) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write rankings file " + path.string());
  for (const auto& ranked : rankings) {
    nlohmann::json record;
    record["direction"] = std::string(to_string(ranked.query.direction));
    record["known"] = graph.entity(ranked.query.known);
    record["relation"] = graph.relation(ranked.query.relation);
    record["ground_truth"] = ranked.query.ground_truth
                                 ? nlohmann::json(graph.entity(*ranked.query.ground_truth))
                                 : nlohmann::json(nullptr);
    const std::size_t keep = prefix == 0 ? ranked.order.size() : std::min(prefix, ranked.order.size());
    auto& ids = record["ranking"] = nlohmann::json::array();
    for (std::size_t i = 0; i < keep; ++i) ids.push_back(graph.entity(ranked.order[i]));
    out << record.dump() << '\n';
  }
}

}  // namespace kgr3
