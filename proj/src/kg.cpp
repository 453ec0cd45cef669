#include "kgr3/kg.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "kgr3/error.hpp"

namespace kgr3 {

namespace {

const std::vector<std::uint32_t> kEmptyPositions;

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string collapse_whitespace(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find('\t', start);
    fields.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return fields;
}

}  // namespace

std::string_view to_string(Direction direction) {
  return direction == Direction::kHead ? "head" : "tail";
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kValid:
      return "valid";
    case Split::kTest:
      return "test";
  }
  return "?";
}

Direction parse_direction(std::string_view text) {
  if (text == "head") return Direction::kHead;
  if (text == "tail") return Direction::kTail;
  throw ParseError("unknown direction '" + std::string(text) + "' (expected head or tail)");
}

std::vector<Triple> parse_triples(std::istream& in, std::string_view source_name) {
  std::vector<Triple> triples;
  std::string line;
  std::size_t line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_tabs(line);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() || fields[2].empty()) {
      std::ostringstream msg;
      msg << source_name << ":" << line_number << ": expected 3 tab-separated fields, got "
          << fields.size();
      throw ParseError(msg.str());
    }
    triples.push_back({std::move(fields[0]), std::move(fields[1]), std::move(fields[2])});
  }
  return triples;
}

std::vector<Triple> load_triples(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open triple file " + path.string());
  return parse_triples(in, path.string());
}

KnowledgeGraph KnowledgeGraph::build(const std::vector<Triple>& train,
                                     const std::vector<Triple>& valid,
                                     const std::vector<Triple>& test) {
  KnowledgeGraph g;
  std::set<std::string> entity_set;
  std::set<std::string> relation_set;
  for (const auto* split : {&train, &valid, &test}) {
    for (const auto& t : *split) {
      entity_set.insert(t.head);
      entity_set.insert(t.tail);
      relation_set.insert(t.relation);
    }
  }
  g.entities_.assign(entity_set.begin(), entity_set.end());
  g.relations_.assign(relation_set.begin(), relation_set.end());
  for (EntityIdx i = 0; i < g.entities_.size(); ++i) g.entity_lookup_.emplace(g.entities_[i], i);
  for (RelationIdx i = 0; i < g.relations_.size(); ++i) g.relation_lookup_.emplace(g.relations_[i], i);

  g.triples_.reserve(train.size() + valid.size() + test.size());
  auto append = [&g](const std::vector<Triple>& triples, Split split) {
    for (const auto& t : triples) {
      g.triples_.push_back({g.entity_lookup_.at(t.head), g.relation_lookup_.at(t.relation),
                            g.entity_lookup_.at(t.tail), split});
    }
  };
  append(train, Split::kTrain);
  g.train_end_ = g.triples_.size();
  append(valid, Split::kValid);
  g.valid_end_ = g.triples_.size();
  append(test, Split::kTest);

  g.relation_.resize(g.relations_.size());
  g.entity_.resize(g.entities_.size());
  for (std::uint32_t pos = 0; pos < g.triples_.size(); ++pos) {
    const auto& t = g.triples_[pos];
    g.head_relation_[{t.head, t.relation}].push_back(pos);
    g.relation_tail_[{t.relation, t.tail}].push_back(pos);
    g.relation_[t.relation].push_back(pos);
    g.entity_[t.head].push_back(pos);
    if (t.tail != t.head) g.entity_[t.tail].push_back(pos);
    const auto k = g.key(t.head, t.relation, t.tail);
    g.all_true_.insert(k);
    if (t.split == Split::kTrain) g.train_true_.insert(k);
  }
  return g;
}

KnowledgeGraph KnowledgeGraph::load_dir(const std::filesystem::path& dir) {
  return build(load_triples(dir / "train.txt"), load_triples(dir / "valid.txt"),
               load_triples(dir / "test.txt"));
}

std::optional<EntityIdx> KnowledgeGraph::find_entity(std::string_view id) const {
  auto it = entity_lookup_.find(std::string(id));
  if (it == entity_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<RelationIdx> KnowledgeGraph::find_relation(std::string_view id) const {
  auto it = relation_lookup_.find(std::string(id));
  if (it == relation_lookup_.end()) return std::nullopt;
  return it->second;
}

EntityIdx KnowledgeGraph::entity_index(std::string_view id) const {
  if (auto idx = find_entity(id)) return *idx;
  throw LookupError("unknown entity id '" + std::string(id) + "'");
}

RelationIdx KnowledgeGraph::relation_index(std::string_view id) const {
  if (auto idx = find_relation(id)) return *idx;
  throw LookupError("unknown relation id '" + std::string(id) + "'");
}

std::span<const IndexedTriple> KnowledgeGraph::split(Split split) const {
  std::span<const IndexedTriple> all = triples_;
  switch (split) {
    case Split::kTrain:
      return all.subspan(0, train_end_);
    case Split::kValid:
      return all.subspan(train_end_, valid_end_ - train_end_);
    case Split::kTest:
      return all.subspan(valid_end_);
  }
  return {};
}

Triple KnowledgeGraph::to_triple(const IndexedTriple& t) const {
  return {entities_.at(t.head), relations_.at(t.relation), entities_.at(t.tail)};
}

std::span<const std::uint32_t> KnowledgeGraph::by_head_relation(EntityIdx head,
                                                                RelationIdx relation) const {
  auto it = head_relation_.find({head, relation});
  return it == head_relation_.end() ? std::span<const std::uint32_t>(kEmptyPositions)
                                    : std::span<const std::uint32_t>(it->second);
}

std::span<const std::uint32_t> KnowledgeGraph::by_relation_tail(RelationIdx relation,
                                                                EntityIdx tail) const {
  auto it = relation_tail_.find({relation, tail});
  return it == relation_tail_.end() ? std::span<const std::uint32_t>(kEmptyPositions)
                                    : std::span<const std::uint32_t>(it->second);
}

std::span<const std::uint32_t> KnowledgeGraph::by_relation(RelationIdx relation) const {
  if (relation >= relation_.size()) return kEmptyPositions;
  return relation_[relation];
}

std::span<const std::uint32_t> KnowledgeGraph::by_entity(EntityIdx entity) const {
  if (entity >= entity_.size()) return kEmptyPositions;
  return entity_[entity];
}

std::uint64_t KnowledgeGraph::key(EntityIdx head, RelationIdx relation, EntityIdx tail) const {
  const std::uint64_t ne = entities_.size();
  return (static_cast<std::uint64_t>(head) * relations_.size() + relation) * ne + tail;
}

bool KnowledgeGraph::is_true(EntityIdx head, RelationIdx relation, EntityIdx tail) const {
  return all_true_.contains(key(head, relation, tail));
}

bool KnowledgeGraph::is_train(EntityIdx head, RelationIdx relation, EntityIdx tail) const {
  return train_true_.contains(key(head, relation, tail));
}

std::string KnowledgeGraph::dump_indices() const {
  std::ostringstream out;
  auto list = [&out](const std::vector<std::uint32_t>& positions) {
    for (auto p : positions) out << ' ' << p;
    out << '\n';
  };
  out << "head_relation\n";
  for (const auto& [k, v] : head_relation_) {
    out << entities_[k.first] << '\t' << relations_[k.second] << ':';
    list(v);
  }
  out << "relation_tail\n";
  for (const auto& [k, v] : relation_tail_) {
    out << relations_[k.first] << '\t' << entities_[k.second] << ':';
    list(v);
  }
  out << "relation\n";
  for (RelationIdx r = 0; r < relation_.size(); ++r) {
    out << relations_[r] << ':';
    list(relation_[r]);
  }
  out << "entity\n";
  for (EntityIdx e = 0; e < entity_.size(); ++e) {
    out << entities_[e] << ':';
    list(entity_[e]);
  }
  std::vector<std::uint64_t> truth(all_true_.begin(), all_true_.end());
  std::sort(truth.begin(), truth.end());
  out << "all_true";
  for (auto k : truth) out << ' ' << k;
  out << '\n';
  return out.str();
}

// ---------------------------------------------------------------------------

std::string normalize_surface(std::string_view text) {
  std::string lowered(text);
  for (char& c : lowered) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::string out = collapse_whitespace(lowered);
  auto is_quote = [](char c) { return c == '"' || c == '\'' || c == '`'; };
  auto is_terminal = [&](char c) {
    return c == '.' || c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || is_quote(c);
  };
  while (!out.empty() && is_terminal(out.back())) out.pop_back();
  std::size_t lead = 0;
  while (lead < out.size() && is_quote(out[lead])) ++lead;
  out.erase(0, lead);
  return collapse_whitespace(out);
}

std::string verbalize_relation(std::string_view relation) {
  std::string rewritten(relation);
  std::replace(rewritten.begin(), rewritten.end(), '/', ' ');
  std::replace(rewritten.begin(), rewritten.end(), '.', ' ');
  std::string out = collapse_whitespace(rewritten);
  std::size_t lead = 0;
  while (lead < out.size() && (out[lead] == '_' || out[lead] == ' ')) ++lead;
  out.erase(0, lead);
  while (!out.empty() && (out.back() == '_' || out.back() == ' ')) out.pop_back();
  return out;
}

ContextStore::ContextStore(std::vector<EntityContext> contexts) {
  for (auto& ctx : contexts) {
    if (ctx.entity.empty()) throw Error("context entry with empty entity id");
    if (ctx.label.empty()) ctx.label = ctx.entity;
    std::set<std::string> seen;
    std::vector<std::string> aliases;
    for (auto& alias : ctx.aliases) {
      auto norm = normalize_surface(alias);
      if (norm.empty() || !seen.insert(norm).second) continue;
      aliases.push_back(std::move(alias));
    }
    ctx.aliases = std::move(aliases);
    std::string id = ctx.entity;
    if (!contexts_.emplace(id, std::move(ctx)).second) {
      throw Error("duplicate entity id '" + id + "' in context file");
    }
  }
  build_reverse_maps();
}

void ContextStore::build_reverse_maps() {
  by_label_.clear();
  by_alias_.clear();
  collisions_ = 0;
  // contexts_ iterates in ascending id order, so the first writer of a
  // surface form is the lexicographically smallest id.
  auto insert = [this](std::unordered_map<std::string, EntityId>& map, const std::string& surface,
                       const EntityId& id) {
    auto norm = normalize_surface(surface);
    if (norm.empty()) return;
    auto [it, inserted] = map.emplace(norm, id);
    if (!inserted && it->second != id) {
      ++collisions_;
      spdlog::debug("surface '{}' shared by {} and {}; keeping {}", norm, it->second, id,
                    it->second);
    }
  };
  for (const auto& [id, ctx] : contexts_) {
    insert(by_label_, ctx.label, id);
    for (const auto& alias : ctx.aliases) insert(by_alias_, alias, id);
  }
  if (collisions_ > 0) spdlog::info("context store: {} surface-form collisions", collisions_);
}

ContextStore ContextStore::parse(std::string_view json_text) {
  std::set<std::string> keys;
  std::string duplicate;
  nlohmann::json::parser_callback_t on_event = [&](int depth, nlohmann::json::parse_event_t event,
                                                   nlohmann::json& parsed) {
    if (event == nlohmann::json::parse_event_t::key && depth == 1) {
      auto key = parsed.get<std::string>();
      if (!keys.insert(key).second && duplicate.empty()) duplicate = key;
    }
    return true;
  };
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text.begin(), json_text.end(), on_event);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("context file: ") + e.what());
  }
  if (!duplicate.empty()) throw Error("duplicate entity id '" + duplicate + "' in context file");
  if (!doc.is_object()) throw ParseError("context file must be a JSON object keyed by entity id");

  std::vector<EntityContext> contexts;
  contexts.reserve(doc.size());
  for (auto& [id, entry] : doc.items()) {
    EntityContext ctx;
    ctx.entity = id;
    if (entry.is_string()) {
      ctx.label = entry.get<std::string>();
    } else if (entry.is_object()) {
      ctx.label = entry.value("label", std::string());
      ctx.description = entry.value("description", std::string());
      if (auto it = entry.find("aliases"); it != entry.end() && !it->is_null()) {
        ctx.aliases = it->get<std::vector<std::string>>();
      }
    } else {
      throw ParseError("context entry for '" + id + "' must be an object");
    }
    contexts.push_back(std::move(ctx));
  }
  return ContextStore(std::move(contexts));
}

ContextStore ContextStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open context file " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str());
}

const EntityContext* ContextStore::find(std::string_view id) const {
  auto it = contexts_.find(id);
  return it == contexts_.end() ? nullptr : &it->second;
}

EntityContext ContextStore::lookup(std::string_view id) const {
  if (const auto* ctx = find(id)) return *ctx;
  return EntityContext{std::string(id), std::string(id), {}, {}};
}

std::string ContextStore::label(std::string_view id) const {
  const auto* ctx = find(id);
  return ctx ? ctx->label : std::string(id);
}

std::string ContextStore::description(std::string_view id) const {
  const auto* ctx = find(id);
  return ctx ? ctx->description : std::string();
}

std::optional<EntityId> ContextStore::resolve_label(std::string_view surface) const {
  auto it = by_label_.find(normalize_surface(surface));
  if (it == by_label_.end()) return std::nullopt;
  return it->second;
}

std::optional<EntityId> ContextStore::resolve_alias(std::string_view surface) const {
  auto it = by_alias_.find(normalize_surface(surface));
  if (it == by_alias_.end()) return std::nullopt;
  return it->second;
}

std::optional<EntityId> ContextStore::resolve(std::string_view surface) const {
  if (auto id = resolve_label(surface)) return id;
  return resolve_alias(surface);
}

ContextStore ContextStore::without_descriptions() const {
  ContextStore copy = *this;
  for (auto& [id, ctx] : copy.contexts_) ctx.description.clear();
  return copy;
}

}  // namespace kgr3
