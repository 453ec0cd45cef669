#include "kgr3/rerank.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <set>
#include <unordered_set>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "kgr3/error.hpp"

namespace kgr3 {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string candidate_line(const EntityContext& ctx) {
  return ctx.description.empty() ? ctx.label : ctx.label + ": " + ctx.description;
}

// Other known train completions of the query (the ground truth included).
std::set<EntityIdx> known_completions(const KnowledgeGraph& graph, const Query& query) {
  std::set<EntityIdx> out;
  const auto triples = graph.triples();
  auto positions = query.direction == Direction::kTail
                       ? graph.by_head_relation(query.known, query.relation)
                       : graph.by_relation_tail(query.relation, query.known);
  for (auto pos : positions) {
    const auto& t = triples[pos];
    if (t.split != Split::kTrain) continue;
    out.insert(query.direction == Direction::kTail ? t.tail : t.head);
  }
  if (query.ground_truth) out.insert(*query.ground_truth);
  return out;
}

}  // namespace

std::string_view to_string(CandidateSource source) {
  switch (source) {
    case CandidateSource::kBase:
      return "base";
    case CandidateSource::kReasoned:
      return "reasoned";
    case CandidateSource::kSupplement:
      return "supplement";
  }
  return "?";
}

std::string_view to_string(MatchKind kind) {
  switch (kind) {
    case MatchKind::kLabel:
      return "label";
    case MatchKind::kAlias:
      return "alias";
    case MatchKind::kSubstring:
      return "substring";
    case MatchKind::kFallback:
      return "fallback";
  }
  return "?";
}

CandidateSet compose_candidates(const RankedEntityList& ranked, std::span<const EntityIdx> reasoned,
                                std::size_t n, std::size_t p) {
  if (p > n) throw ConfigError("compose_candidates: p must not exceed n");
  const std::size_t total = ranked.order.size();
  n = std::min(n, total);
  p = std::min(p, n);

  CandidateSet out;
  out.query = ranked.query;
  std::vector<bool> placed(total, false);
  auto add = [&](EntityIdx e, CandidateSource source) {
    placed[e] = true;
    out.members.push_back(e);
    out.sources.push_back(source);
  };
  for (std::size_t i = 0; i < p; ++i) add(ranked.order[i], CandidateSource::kBase);
  for (auto e : reasoned) {
    if (out.members.size() >= n) break;
    if (e < total && !placed[e]) add(e, CandidateSource::kReasoned);
  }
  for (std::size_t i = p; i < total && out.members.size() < n; ++i) {
    if (!placed[ranked.order[i]]) add(ranked.order[i], CandidateSource::kSupplement);
  }
  return out;
}

std::string render_rerank_prompt(const KnowledgeGraph& graph, const ContextStore& contexts,
                                 const Query& query, std::span<const IndexedTriple> neighbor_facts,
                                 std::span<const EntityIdx> candidates) {
  const auto known = contexts.lookup(graph.entity(query.known));
  const std::string_view known_slot = query.direction == Direction::kHead ? "tail" : "head";

  std::string text = "Here is an incomplete triple with missing " +
                     std::string(to_string(query.direction)) + " entity " +
                     std::string(kMissingEntity) + ": " +
                     render_masked_triple(graph, contexts, query, kMissingEntity) + ".\n\n";
  std::string body;
  if (!known.description.empty()) {
    body += "Following are some contexts about " + std::string(known_slot) + " entity " + known.label +
            ":\n" + known.description + "\n";
  }
  if (!neighbor_facts.empty()) {
    body += "Following are some triple facts of entity " + known.label + ":\n";
    for (const auto& t : neighbor_facts) {
      body += "(" + contexts.label(graph.entity(t.head)) + ", " +
              verbalize_relation(graph.relation(t.relation)) + ", " +
              contexts.label(graph.entity(t.tail)) + ")\n";
    }
  }
  if (!body.empty()) text += body + "\n";
  text += "Please select the most appropriate entity for " + std::string(kMissingEntity) +
          " from the candidate answer list:";
  for (auto e : candidates) text += "\n" + candidate_line(contexts.lookup(graph.entity(e)));
  return text;
}

std::vector<ChatMessage> build_rerank_prompt(const KnowledgeGraph& graph, const ContextStore& contexts,
                                             const Query& query,
                                             std::span<const IndexedTriple> neighbor_facts,
                                             const CandidateSet& candidates) {
  return {{Role::kUser,
           render_rerank_prompt(graph, contexts, query, neighbor_facts, candidates.members)}};
}

MatchResult match_answer(std::string_view llm_text, const CandidateSet& candidates,
                         const KnowledgeGraph& graph, const ContextStore& contexts) {
  if (candidates.members.empty()) throw Error("match_answer: empty candidate set");
  const std::string text = normalize_surface(llm_text);

  std::vector<EntityContext> ctxs;
  ctxs.reserve(candidates.members.size());
  for (auto e : candidates.members) ctxs.push_back(contexts.lookup(graph.entity(e)));

  for (std::size_t i = 0; i < ctxs.size(); ++i) {
    if (normalize_surface(ctxs[i].label) == text) return {candidates.members[i], MatchKind::kLabel};
  }
  for (std::size_t i = 0; i < ctxs.size(); ++i) {
    for (const auto& alias : ctxs[i].aliases) {
      if (normalize_surface(alias) == text) return {candidates.members[i], MatchKind::kAlias};
    }
  }

  // Longest surface form of each candidate that occurs in the text.
  std::vector<std::pair<std::size_t, std::string>> hits;
  for (std::size_t i = 0; i < ctxs.size(); ++i) {
    std::string best;
    auto consider = [&](const std::string& surface) {
      auto norm = normalize_surface(surface);
      if (!norm.empty() && text.find(norm) != std::string::npos && norm.size() > best.size()) best = norm;
    };
    consider(ctxs[i].label);
    for (const auto& alias : ctxs[i].aliases) consider(alias);
    if (!best.empty()) hits.emplace_back(i, std::move(best));
  }
  // A hit whose surface is contained in another hit's surface is shadowed
  // ("champaign" inside "champaign county").
  std::vector<std::size_t> survivors;
  for (const auto& [i, surface] : hits) {
    bool shadowed = false;
    for (const auto& [j, other] : hits) {
      if (i != j && other.size() > surface.size() && other.find(surface) != std::string::npos) {
        shadowed = true;
        break;
      }
    }
    if (!shadowed) survivors.push_back(i);
  }
  if (survivors.size() == 1) return {candidates.members[survivors.front()], MatchKind::kSubstring};

  spdlog::warn("rerank answer '{}' matched no unique candidate; keeping the first candidate",
               std::string(llm_text.substr(0, 120)));
  return {candidates.members.front(), MatchKind::kFallback};
}

RerankResult reorder(const RankedEntityList& ranked, const CandidateSet& candidates,
                     EntityIdx selected) {
  if (std::find(candidates.members.begin(), candidates.members.end(), selected) ==
      candidates.members.end()) {
    throw Error("reorder: selected entity is not a candidate");
  }
  const std::size_t total = ranked.order.size();
  RerankResult result;
  result.query = ranked.query;
  result.selected = selected;
  result.final_order.reserve(total);
  std::vector<bool> placed(total, false);
  auto place = [&](EntityIdx e) {
    placed[e] = true;
    result.final_order.push_back(e);
  };
  place(selected);
  for (auto e : candidates.members) {
    if (e != selected) place(e);
  }
  // Base entities displaced from the candidate window by reasoned ones keep
  // their relative order behind the members.
  for (auto e : ranked.order) {
    if (!placed[e]) place(e);
  }
  return result;
}

std::vector<EntityIdx> hard_negative_pool(const KnowledgeGraph& graph, const Query& query) {
  const auto exclude = known_completions(graph, query);
  std::set<EntityIdx> pool;
  const auto triples = graph.triples();
  for (auto pos : graph.by_relation(query.relation)) {
    const auto& t = triples[pos];
    if (t.split != Split::kTrain) continue;
    const EntityIdx slot = query.direction == Direction::kTail ? t.tail : t.head;
    if (!exclude.contains(slot)) pool.insert(slot);
  }
  return {pool.begin(), pool.end()};
}

SftSample build_sft_sample(const KnowledgeGraph& graph, const ContextStore& contexts,
                           const Query& query, const SftConfig& config, std::uint64_t sample_seed) {
  if (!query.ground_truth) throw Error("SFT sample needs a ground truth");
  std::mt19937_64 rng(sample_seed);
  const EntityIdx truth = *query.ground_truth;
  const auto num_entities = static_cast<EntityIdx>(graph.num_entities());

  const auto pool = hard_negative_pool(graph, query);
  std::vector<EntityIdx> hard;
  std::sample(pool.begin(), pool.end(), std::back_inserter(hard),
              std::min(config.hard_negatives, pool.size()), rng);

  std::unordered_set<EntityIdx> taken(hard.begin(), hard.end());
  for (auto e : known_completions(graph, query)) taken.insert(e);
  const std::size_t easy_target = config.hard_negatives + config.easy_negatives - hard.size();
  std::vector<EntityIdx> easy;
  std::uniform_int_distribution<EntityIdx> pick(0, num_entities - 1);
  const std::size_t max_draws = 64 * easy_target + 256;
  for (std::size_t draw = 0; draw < max_draws && easy.size() < easy_target; ++draw) {
    const EntityIdx e = pick(rng);
    if (taken.insert(e).second) easy.push_back(e);
  }
  if (easy.size() < easy_target) {
    // Dense exclusion set: sample from the explicit remainder instead.
    std::vector<EntityIdx> remaining;
    for (EntityIdx e = 0; e < num_entities; ++e) {
      if (!taken.contains(e)) remaining.push_back(e);
    }
    std::shuffle(remaining.begin(), remaining.end(), rng);
    for (auto e : remaining) {
      if (easy.size() == easy_target) break;
      easy.push_back(e);
    }
  }

  std::vector<std::pair<EntityIdx, CandidateRole>> slots;
  slots.emplace_back(truth, CandidateRole::kGroundTruth);
  for (auto e : hard) slots.emplace_back(e, CandidateRole::kHard);
  for (auto e : easy) slots.emplace_back(e, CandidateRole::kEasy);
  std::shuffle(slots.begin(), slots.end(), rng);

  SftSample sample;
  sample.query = query;
  sample.question = build_question(graph, contexts, query);
  sample.neighbor_facts = retrieve_neighbor_facts(graph, query, config.neighbor_limit);
  sample.known_description = contexts.description(graph.entity(query.known));
  for (const auto& [e, role] : slots) {
    sample.candidates.push_back(e);
    sample.roles.push_back(role);
  }
  sample.target_label = contexts.label(graph.entity(truth));
  sample.prompt = render_rerank_prompt(graph, contexts, query, sample.neighbor_facts, sample.candidates);
  return sample;
}

void for_each_sft_sample(const KnowledgeGraph& graph, const ContextStore& contexts,
                         const SftConfig& config, const std::function<void(const SftSample&)>& visit) {
  const auto train = graph.split(Split::kTrain);
  if (train.empty()) throw Error("cannot build an SFT dataset from an empty train split");
  std::uint64_t index = 0;
  for (const auto& t : train) {
    for (const Query& query : {Query{Direction::kTail, t.head, t.relation, t.tail},
                               Query{Direction::kHead, t.tail, t.relation, t.head}}) {
      if (config.max_samples != 0 && index >= config.max_samples) return;
      visit(build_sft_sample(graph, contexts, query, config, splitmix64(config.seed ^ splitmix64(index))));
      ++index;
    }
  }
}

std::vector<SftSample> build_sft_dataset(const KnowledgeGraph& graph, const ContextStore& contexts,
                                         const SftConfig& config) {
  std::vector<SftSample> samples;
  for_each_sft_sample(graph, contexts, config,
                      [&samples](const SftSample& s) { samples.push_back(s); });
  return samples;
}

nlohmann::json sft_record(const SftSample& sample) {
  return nlohmann::json{{"instruction", kSftInstruction},
                        {"input", sample.prompt},
                        {"output", sample.target_label}};
}

std::size_t write_sft_dataset(const std::filesystem::path& path, const KnowledgeGraph& graph,
                              const ContextStore& contexts, const SftConfig& config) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write SFT dataset " + path.string());
  std::size_t count = 0;
  for_each_sft_sample(graph, contexts, config, [&](const SftSample& s) {
    out << sft_record(s).dump() << '\n';
    ++count;
  });
  return count;
}

}  // namespace kgr3
