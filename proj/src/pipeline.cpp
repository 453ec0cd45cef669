#include "kgr3/pipeline.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "kgr3/error.hpp"

namespace kgr3 {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json endpoint_defaults() {
  const LlmEndpointConfig d;
  return json{{"kind", "http"},
              {"base_url", d.base_url},
              {"path", d.path},
              {"model", d.model},
              {"temperature", d.temperature},
              {"max_tokens", d.max_tokens},
              {"timeout_ms", d.timeout.count()},
              {"max_retries", d.max_retries},
              {"max_concurrency", d.max_concurrency},
              {"initial_backoff_ms", d.initial_backoff.count()},
              {"api_key_env", "KGR3_API_KEY"},
              {"transcript", ""}};
}

void check_known_keys(const json& doc, const json& defaults, const std::string& prefix) {
  if (!doc.is_object()) throw ConfigError("config: '" + prefix + "' must be an object");
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    if (defaults[key].is_object() && !value.is_null()) check_known_keys(value, defaults[key], path);
  }
}

fs::path resolve_path(const std::string& text, const fs::path& base_dir) {
  if (text.empty()) return {};
  fs::path p(text);
  if (p.is_relative()) p = base_dir / p;
  return p.lexically_normal();
}

EndpointSpec parse_endpoint(const json& j, const fs::path& base_dir) {
  EndpointSpec spec;
  spec.kind = j.at("kind").get<std::string>();
  spec.http.base_url = j.at("base_url").get<std::string>();
  spec.http.path = j.at("path").get<std::string>();
  spec.http.model = j.at("model").get<std::string>();
  spec.http.temperature = j.at("temperature").get<double>();
  spec.http.max_tokens = j.at("max_tokens").get<int>();
  spec.http.timeout = std::chrono::milliseconds(j.at("timeout_ms").get<std::int64_t>());
  spec.http.max_retries = j.at("max_retries").get<int>();
  spec.http.max_concurrency = j.at("max_concurrency").get<int>();
  spec.http.initial_backoff = std::chrono::milliseconds(j.at("initial_backoff_ms").get<std::int64_t>());
  spec.api_key_env = j.at("api_key_env").get<std::string>();
  spec.transcript = resolve_path(j.at("transcript").get<std::string>(), base_dir);
  static const std::set<std::string> kinds{"http", "oracle", "adversarial", "scripted"};
  if (!kinds.contains(spec.kind)) throw ConfigError("config: unknown llm kind '" + spec.kind + "'");
  if (spec.kind == "scripted" && spec.transcript.empty()) {
    throw ConfigError("config: scripted llm needs a transcript path");
  }
  return spec;
}

std::string hex(const unsigned char* data, unsigned len) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 0xf]);
  }
  return out;
}

std::string digest_hex(const EVP_MD* md, std::initializer_list<std::string_view> parts) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), md, nullptr) != 1) throw Error("digest init failed");
  for (auto part : parts) {
    if (EVP_DigestUpdate(ctx.get(), part.data(), part.size()) != 1) throw Error("digest update failed");
  }
  unsigned char out[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), out, &len) != 1) throw Error("digest final failed");
  return hex(out, len);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_json(const fs::path& path, const json& j) {
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
  }
  fs::rename(tmp, path);
}

json triple_json(const KnowledgeGraph& graph, const IndexedTriple& t) {
  return json::array({graph.entity(t.head), graph.relations()[t.relation], graph.entity(t.tail)});
}

// Reads a line-delimited cache, keyed by query_id. A torn final line from an
// interrupted run is dropped with a warning.
std::map<std::string, json> read_cache(const fs::path& path) {
  std::map<std::string, json> records;
  std::ifstream in(path);
  if (!in) return records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      auto id = j.at("query_id").get<std::string>();
      records[std::move(id)] = std::move(j);
    } catch (const json::exception&) {
      spdlog::warn("{}:{}: dropping unreadable cache line", path.string(), lineno);
    }
  }
  return records;
}

// Rewrites a cache without torn lines so appends start on a fresh line.
void compact_cache(const fs::path& path, const std::map<std::string, json>& records) {
  if (!fs::exists(path)) return;
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    for (const auto& [id, j] : records) out << j.dump() << '\n';
  }
  fs::rename(tmp, path);
}

std::string optional_label(const KnowledgeGraph& graph, const ContextStore& contexts,
                           const std::optional<EntityIdx>& e) {
  return e ? contexts.label(graph.entity(*e)) : std::string();
}

std::size_t default_workers() { return std::max(1u, std::thread::hardware_concurrency()); }

}  // namespace

json default_config_json() {
  const TrainConfig train;
  const SftConfig sft;
  return json{
      {"label", "run"},
      {"seed", 42},
      {"output_dir", "runs/default"},
      {"dataset", {{"dir", ""}, {"train", ""}, {"valid", ""}, {"test", ""}, {"contexts", ""}}},
      {"base",
       {{"model", "TransE"},
        {"import", ""},
        {"dimension", train.dimension},
        {"epochs", train.epochs},
        {"learning_rate", train.learning_rate},
        {"margin", train.margin},
        {"negatives", train.negatives},
        {"ranking_prefix", 0}}},
      {"retrieval", {{"k", 3}, {"neighbor_limit", 3}}},
      {"reasoning", {{"mode", "context-aware"}, {"delta", 50}, {"llm", endpoint_defaults()}}},
      {"rerank", {{"n", 20}, {"p", 10}, {"llm", endpoint_defaults()}}},
      {"sft",
       {{"hard_negatives", sft.hard_negatives},
        {"easy_negatives", sft.easy_negatives},
        {"max_samples", sft.max_samples}}},
      {"eval", {{"split", "test"}}},
      {"ablation", {{"no_reasoning", false}, {"no_descriptions", false}, {"no_neighbor_facts", false}}}};
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("override '" + assignment + "' has an empty key segment");
    if (!node->is_object()) throw ConfigError("override '" + key + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = std::move(value);
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    start = dot + 1;
  }
}

PipelineConfig PipelineConfig::from_json(const json& doc, const fs::path& base_dir) {
  const json defaults = default_config_json();
  check_known_keys(doc, defaults, "");
  json merged = defaults;
  merged.merge_patch(doc);

  PipelineConfig c;
  try {
    c.label = merged.at("label").get<std::string>();
    c.seed = merged.at("seed").get<std::uint64_t>();
    c.output_dir = resolve_path(merged.at("output_dir").get<std::string>(), base_dir);

    auto& ds = merged.at("dataset");
    const auto dir = resolve_path(ds.at("dir").get<std::string>(), base_dir);
    auto dataset_path = [&](const char* key, const char* file) {
      auto explicit_path = resolve_path(ds.at(key).get<std::string>(), base_dir);
      if (explicit_path.empty() && !dir.empty()) explicit_path = dir / file;
      ds[key] = explicit_path.string();
      return explicit_path;
    };
    c.train_path = dataset_path("train", "train.txt");
    c.valid_path = dataset_path("valid", "valid.txt");
    c.test_path = dataset_path("test", "test.txt");
    c.contexts_path = resolve_path(ds.at("contexts").get<std::string>(), base_dir);
    if (c.contexts_path.empty() && !dir.empty() && fs::exists(dir / "contexts.json")) {
      c.contexts_path = dir / "contexts.json";
    }
    ds["contexts"] = c.contexts_path.string();
    ds["dir"] = dir.string();
    if (c.train_path.empty() || c.valid_path.empty() || c.test_path.empty()) {
      throw ConfigError("config: dataset.dir or dataset.train/valid/test must be set");
    }

    auto& base = merged.at("base");
    c.base_kind = parse_model_kind(base.at("model").get<std::string>());
    c.base_import = resolve_path(base.at("import").get<std::string>(), base_dir);
    base["import"] = c.base_import.string();
    c.train.dimension = base.at("dimension").get<int>();
    c.train.epochs = base.at("epochs").get<int>();
    c.train.learning_rate = base.at("learning_rate").get<double>();
    c.train.margin = base.at("margin").get<double>();
    c.train.negatives = base.at("negatives").get<int>();
    c.train.seed = c.seed;
    c.ranking_prefix = base.at("ranking_prefix").get<std::size_t>();

    c.k = merged.at("retrieval").at("k").get<std::size_t>();
    c.neighbor_limit = merged.at("retrieval").at("neighbor_limit").get<std::size_t>();

    auto& reasoning = merged.at("reasoning");
    c.mode = parse_reasoning_mode(reasoning.at("mode").get<std::string>());
    c.delta = reasoning.at("delta").get<std::size_t>();
    c.reasoning_llm = parse_endpoint(reasoning.at("llm"), base_dir);
    reasoning["llm"]["transcript"] = c.reasoning_llm.transcript.string();

    auto& rerank = merged.at("rerank");
    c.n = rerank.at("n").get<std::size_t>();
    c.p = rerank.at("p").get<std::size_t>();
    c.rerank_llm = parse_endpoint(rerank.at("llm"), base_dir);
    rerank["llm"]["transcript"] = c.rerank_llm.transcript.string();

    auto& sft = merged.at("sft");
    c.sft.hard_negatives = sft.at("hard_negatives").get<std::size_t>();
    c.sft.easy_negatives = sft.at("easy_negatives").get<std::size_t>();
    c.sft.max_samples = sft.at("max_samples").get<std::size_t>();
    c.sft.neighbor_limit = c.neighbor_limit;
    c.sft.seed = c.seed;

    const auto split = merged.at("eval").at("split").get<std::string>();
    if (split == "test") {
      c.eval_split = Split::kTest;
    } else if (split == "valid") {
      c.eval_split = Split::kValid;
    } else {
      throw ConfigError("config: eval.split must be 'test' or 'valid', got '" + split + "'");
    }

    auto& ab = merged.at("ablation");
    c.ablations.no_reasoning = ab.at("no_reasoning").get<bool>();
    c.ablations.no_descriptions = ab.at("no_descriptions").get<bool>();
    c.ablations.no_neighbor_facts = ab.at("no_neighbor_facts").get<bool>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  if (c.p > c.n) {
    throw ConfigError("config: rerank.p (" + std::to_string(c.p) + ") exceeds rerank.n (" +
                      std::to_string(c.n) + ")");
  }
  if (c.delta < c.n) {
    throw ConfigError("config: reasoning.delta (" + std::to_string(c.delta) +
                      ") is smaller than rerank.n (" + std::to_string(c.n) + ")");
  }
  if (c.base_import.empty()) c.train.validate(c.base_kind);
  for (const auto* spec : {&c.reasoning_llm, &c.rerank_llm}) {
    if (spec->kind == "http") spec->http.validate();
  }
  c.document = std::move(merged);
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path, std::span<const std::string> overrides,
                                    std::optional<std::uint64_t> seed) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
  for (const auto& o : overrides) apply_override(doc, o);
  if (seed) doc["seed"] = *seed;
  return from_json(doc, fs::absolute(path).parent_path());
}

void PipelineConfig::validate(std::size_t num_entities) const {
  if (p > n) throw ConfigError("config: p > n");
  if (n > num_entities) {
    throw ConfigError("config: rerank.n (" + std::to_string(n) + ") exceeds the entity count (" +
                      std::to_string(num_entities) + ")");
  }
  if (delta < n) throw ConfigError("config: delta < n");
}

std::string PipelineConfig::digest() const { return sha256_hex(document.dump()); }

std::string sha256_hex(std::string_view data) { return digest_hex(EVP_sha256(), {data}); }

std::string git_blob_hash(const fs::path& path) {
  const std::string content = read_file(path);
  const std::string header = "blob " + std::to_string(content.size());
  return digest_hex(EVP_sha1(), {header, std::string_view("\0", 1), content});
}

std::shared_ptr<ChatModel> make_chat_model(const EndpointSpec& spec) {
  if (spec.kind == "oracle") return std::make_shared<OracleChatModel>();
  if (spec.kind == "adversarial") return std::make_shared<AdversarialChatModel>();
  if (spec.kind == "scripted") return ScriptedChatModel::from_file(spec.transcript);
  if (spec.kind == "http") {
    auto http = spec.http;
    if (!spec.api_key_env.empty()) {
      if (const char* key = std::getenv(spec.api_key_env.c_str())) http.api_key = key;
    }
    return std::make_shared<HttpChatModel>(std::move(http));
  }
  throw ConfigError("unknown llm kind '" + spec.kind + "'");
}

ReasoningOutcome reason_query(const KnowledgeGraph& graph, const ContextStore& contexts,
                              const ScoringModel* model, const PipelineConfig& config,
                              const RankedEntityList& ranked, ChatModel& llm) {
  ReasoningOutcome out;
  const Query& q = ranked.query;
  out.supports = retrieve_supporting_triples(graph, model, q, config.k);
  out.prompt = build_reasoning_prompt(graph, contexts, q, out.supports, config.mode);

  RequestContext rc;
  rc.query_id = query_id(graph, q);
  rc.stage = Stage::kReasoning;
  if (q.ground_truth) rc.ground_truth_label = optional_label(graph, contexts, q.ground_truth);
  const std::size_t window = std::min(config.delta, ranked.order.size());
  for (std::size_t i = 0; i < window; ++i) {
    rc.candidate_labels.push_back(contexts.label(graph.entity(ranked.order[i])));
  }
  out.raw = llm.complete(out.prompt, rc);
  const auto parsed = parse_answers(out.raw);
  out.answers = postprocess(parsed, graph, contexts, ranked, config.delta);
  return out;
}

RerankOutcome rerank_query(const KnowledgeGraph& graph, const ContextStore& contexts,
                           const PipelineConfig& config, const RankedEntityList& ranked,
                           std::span<const EntityIdx> reasoned, ChatModel& llm) {
  RerankOutcome out;
  const Query& q = ranked.query;
  out.candidates = compose_candidates(ranked, reasoned, config.n, config.p);
  if (!config.ablations.no_neighbor_facts) {
    out.facts = retrieve_neighbor_facts(graph, q, config.neighbor_limit);
  }
  out.prompt = build_rerank_prompt(graph, contexts, q, out.facts, out.candidates);

  RequestContext rc;
  rc.query_id = query_id(graph, q);
  rc.stage = Stage::kRerank;
  if (q.ground_truth) rc.ground_truth_label = optional_label(graph, contexts, q.ground_truth);
  for (auto e : out.candidates.members) rc.candidate_labels.push_back(contexts.label(graph.entity(e)));

  out.raw = llm.complete(out.prompt, rc);
  out.match = match_answer(out.raw, out.candidates, graph, contexts);
  out.result = reorder(ranked, out.candidates, out.match.entity);
  out.result.llm_raw = out.raw;
  return out;
}

void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  if (count == 0) return;
  workers = std::clamp<std::size_t>(workers, 1, count);
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::exception_ptr first;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      while (!stop.load()) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first) first = std::current_exception();
          stop = true;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (first) std::rethrow_exception(first);
}

// --- Pipeline -------------------------------------------------------------

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) {
  fs::create_directories(config_.output_dir);
  const auto lock_path = config_.output_dir / ".lock";
  lock_fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
  if (lock_fd_ < 0) throw Error("cannot open lock file " + lock_path.string());
  if (::flock(lock_fd_, LOCK_EX | LOCK_NB) != 0) {
    ::close(lock_fd_);
    lock_fd_ = -1;
    throw Error("output directory " + config_.output_dir.string() + " is locked by another run");
  }
}

Pipeline::~Pipeline() {
  if (lock_fd_ >= 0) {
    ::flock(lock_fd_, LOCK_UN);
    ::close(lock_fd_);
  }
}

void Pipeline::set_chat_model(Stage stage, std::shared_ptr<ChatModel> model) {
  injected_[stage] = std::move(model);
}

std::shared_ptr<ChatModel> Pipeline::chat_model(Stage stage) {
  if (auto it = injected_.find(stage); it != injected_.end()) return it->second;
  return make_chat_model(stage == Stage::kReasoning ? config_.reasoning_llm : config_.rerank_llm);
}

const KnowledgeGraph& Pipeline::graph() {
  if (!graph_) {
    graph_ = KnowledgeGraph::build(load_triples(config_.train_path), load_triples(config_.valid_path),
                                   load_triples(config_.test_path));
    config_.validate(graph_->entities().size());
    spdlog::info("loaded graph: {} entities, {} relations, {} triples", graph_->entities().size(),
                 graph_->relations().size(), graph_->triples().size());
  }
  return *graph_;
}

const ContextStore& Pipeline::contexts() {
  if (!contexts_) {
    contexts_ = config_.contexts_path.empty() ? ContextStore() : ContextStore::load(config_.contexts_path);
  }
  return *contexts_;
}

const ContextStore& Pipeline::prompt_contexts() {
  if (!config_.ablations.no_descriptions) return contexts();
  if (!prompt_contexts_) prompt_contexts_ = contexts().without_descriptions();
  return *prompt_contexts_;
}

std::string Pipeline::input_hash(const fs::path& path) {
  if (path.empty()) return "";
  auto it = hashes_.find(path);
  if (it == hashes_.end()) it = hashes_.emplace(path, git_blob_hash(path)).first;
  return it->second;
}

std::string Pipeline::embed_key() {
  const auto& base = config_.document.at("base");
  json key{{"stage", "embed"},
           {"train", input_hash(config_.train_path)},
           {"valid", input_hash(config_.valid_path)},
           {"test", input_hash(config_.test_path)},
           {"import", input_hash(config_.base_import)},
           {"eval_split", to_string(config_.eval_split)},
           {"ranking_prefix", config_.ranking_prefix}};
  if (config_.base_import.empty()) {
    key["model"] = base;
    key["model"].erase("import");
    key["seed"] = config_.seed;
  }
  return sha256_hex(key.dump());
}

std::string Pipeline::sft_key() {
  json key{{"stage", "sft"},
           {"train", input_hash(config_.train_path)},
           {"valid", input_hash(config_.valid_path)},
           {"test", input_hash(config_.test_path)},
           {"contexts", input_hash(config_.contexts_path)},
           {"sft", config_.document.at("sft")},
           {"seed", config_.seed},
           {"neighbor_limit", config_.ablations.no_neighbor_facts ? 0 : config_.neighbor_limit},
           {"no_descriptions", config_.ablations.no_descriptions}};
  return sha256_hex(key.dump());
}

namespace {

json endpoint_key(const EndpointSpec& spec, const json& doc, const std::string& transcript_hash) {
  json key = doc;
  key.erase("api_key_env");
  key["transcript"] = transcript_hash;
  if (spec.kind != "http") {
    for (const char* field : {"base_url", "path", "model", "temperature", "max_tokens", "timeout_ms",
                              "max_retries", "max_concurrency", "initial_backoff_ms"}) {
      key.erase(field);
    }
  }
  return key;
}

}  // namespace

std::string Pipeline::reason_key() {
  json key{{"stage", "reason"},
           {"embed", embed_key()},
           {"contexts", input_hash(config_.contexts_path)},
           {"k", config_.k},
           {"delta", config_.delta},
           {"mode", to_string(config_.mode)},
           {"no_descriptions", config_.ablations.no_descriptions},
           {"llm", endpoint_key(config_.reasoning_llm, config_.document.at("reasoning").at("llm"),
                                input_hash(config_.reasoning_llm.transcript))}};
  return sha256_hex(key.dump());
}

std::string Pipeline::rerank_key() {
  json key{{"stage", "rerank"},
           {"embed", embed_key()},
           {"reason", config_.ablations.no_reasoning ? json(nullptr) : json(reason_key())},
           {"contexts", input_hash(config_.contexts_path)},
           {"n", config_.n},
           {"p", config_.p},
           {"neighbor_limit", config_.ablations.no_neighbor_facts ? 0 : config_.neighbor_limit},
           {"no_descriptions", config_.ablations.no_descriptions},
           {"llm", endpoint_key(config_.rerank_llm, config_.document.at("rerank").at("llm"),
                                input_hash(config_.rerank_llm.transcript))}};
  return sha256_hex(key.dump());
}

fs::path Pipeline::embed_dir() { return config_.output_dir / "stages" / ("embed-" + embed_key().substr(0, 16)); }
fs::path Pipeline::sft_dir() { return config_.output_dir / "stages" / ("sft-" + sft_key().substr(0, 16)); }
fs::path Pipeline::reason_dir() { return config_.output_dir / "stages" / ("reason-" + reason_key().substr(0, 16)); }
fs::path Pipeline::rerank_dir() { return config_.output_dir / "stages" / ("rerank-" + rerank_key().substr(0, 16)); }
fs::path Pipeline::eval_dir() { return config_.output_dir / "stages" / ("eval-" + rerank_key().substr(0, 16)); }

std::string Pipeline::upstream_command() const {
  return config_.base_import.empty() ? "train-embed" : "import-rankings";
}

const ScoringModel* Pipeline::model() {
  if (!model_checked_) {
    model_checked_ = true;
    const auto path = embed_dir() / "model.bin";
    if (fs::exists(path)) model_ = ScoringModel::load(path);
  }
  return model_ ? &*model_ : nullptr;
}

std::vector<RankedEntityList> Pipeline::load_rankings() {
  const auto dir = embed_dir();
  if (!fs::exists(dir / "done.json")) {
    throw MissingArtifactError("base rankings not found under " + dir.string(), upstream_command());
  }
  return kgr3::import_rankings(dir / "rankings.jsonl", graph());
}

void Pipeline::train_embed() {
  if (!config_.base_import.empty()) {
    throw ConfigError("base.import is set; use import-rankings instead of train-embed");
  }
  const auto& g = graph();
  const auto dir = embed_dir();
  if (fs::exists(dir / "done.json")) {
    spdlog::info("train-embed: up to date ({})", dir.string());
    return;
  }
  fs::create_directories(dir);
  TrainReport report;
  const int every = std::max(1, config_.train.epochs / 10);
  auto model = train(g, config_.base_kind, config_.train, &report, [&](int epoch, double loss) {
    if ((epoch + 1) % every == 0) spdlog::info("train-embed: epoch {} loss {:.6f}", epoch + 1, loss);
  });
  model.save(dir / "model.bin");

  const auto queries = queries_for_split(g, config_.eval_split);
  std::vector<RankedEntityList> rankings(queries.size());
  parallel_for(queries.size(), default_workers(),
               [&](std::size_t i) { rankings[i] = rank_entities(model, queries[i]); });
  write_rankings(dir / "rankings.jsonl", g, rankings, config_.ranking_prefix);
  write_json(dir / "loss.json", json(report.epoch_loss));
  write_json(dir / "done.json", {{"key", embed_key()}, {"queries", rankings.size()},
                                 {"model", to_string(config_.base_kind)}});
  model_ = std::move(model);
  model_checked_ = true;
  spdlog::info("train-embed: wrote {} rankings to {}", rankings.size(), dir.string());
}

void Pipeline::import_rankings() {
  if (config_.base_import.empty()) throw ConfigError("import-rankings needs base.import to be set");
  const auto& g = graph();
  const auto dir = embed_dir();
  if (fs::exists(dir / "done.json")) {
    spdlog::info("import-rankings: up to date ({})", dir.string());
    return;
  }
  fs::create_directories(dir);
  const auto rankings = kgr3::import_rankings(config_.base_import, g);
  write_rankings(dir / "rankings.jsonl", g, rankings, config_.ranking_prefix);
  write_json(dir / "done.json", {{"key", embed_key()}, {"queries", rankings.size()},
                                 {"source", config_.base_import.string()}});
  spdlog::info("import-rankings: imported {} rankings", rankings.size());
}

std::size_t Pipeline::build_sft() {
  const auto& g = graph();
  const auto dir = sft_dir();
  if (fs::exists(dir / "done.json")) {
    spdlog::info("build-sft: up to date ({})", dir.string());
    std::ifstream in(dir / "done.json");
    return json::parse(in).at("samples").get<std::size_t>();
  }
  fs::create_directories(dir);
  auto sft = config_.sft;
  sft.neighbor_limit = config_.ablations.no_neighbor_facts ? 0 : config_.neighbor_limit;
  const std::size_t count = write_sft_dataset(dir / "sft.jsonl", g, prompt_contexts(), sft);
  write_json(dir / "done.json", {{"key", sft_key()}, {"samples", count}});
  spdlog::info("build-sft: wrote {} samples to {}", count, (dir / "sft.jsonl").string());
  return count;
}

void Pipeline::reason() {
  if (config_.ablations.no_reasoning) {
    spdlog::info("reason: skipped by the no-reasoning ablation");
    return;
  }
  const auto& g = graph();
  const auto dir = reason_dir();
  if (fs::exists(dir / "done.json")) {
    spdlog::info("reason: up to date ({})", dir.string());
    return;
  }
  const auto rankings = load_rankings();
  fs::create_directories(dir);
  const auto cache_path = dir / "reasoning.jsonl";
  const auto cached = read_cache(cache_path);
  compact_cache(cache_path, cached);

  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    if (!cached.contains(query_id(g, rankings[i].query))) todo.push_back(i);
  }
  spdlog::info("reason: {} queries, {} cached", rankings.size(), rankings.size() - todo.size());

  auto llm = chat_model(Stage::kReasoning);
  llm->set_audit_log(std::make_shared<AuditLog>(dir / "audit.jsonl"));
  const auto& ctx = prompt_contexts();
  const ScoringModel* scoring = model();
  std::mutex out_mutex;
  std::ofstream out(cache_path, std::ios::app);
  if (!out) throw Error("cannot append to " + cache_path.string());

  parallel_for(todo.size(), llm->max_concurrency(), [&](std::size_t j) {
    const auto& ranked = rankings[todo[j]];
    const auto outcome = reason_query(g, ctx, scoring, config_, ranked, *llm);
    json supports = json::array();
    for (const auto& s : outcome.supports) supports.push_back(triple_json(g, s.triple));
    json resolved = json::array();
    for (auto e : outcome.answers.entities) resolved.push_back(g.entity(e));
    json record{{"query_id", query_id(g, ranked.query)},
                {"raw_response", outcome.raw},
                {"parsed", outcome.answers.raw_strings},
                {"resolved", resolved},
                {"unresolved", outcome.answers.unresolved},
                {"supporting", supports}};
    std::lock_guard lock(out_mutex);
    out << record.dump() << '\n';
    out.flush();
  });
  write_json(dir / "done.json", {{"key", reason_key()}, {"queries", rankings.size()}});
}

void Pipeline::rerank() {
  const auto& g = graph();
  const auto dir = rerank_dir();
  if (fs::exists(dir / "done.json")) {
    spdlog::info("rerank: up to date ({})", dir.string());
    return;
  }
  const auto rankings = load_rankings();

  std::map<std::string, std::vector<EntityIdx>> reasoned;
  if (!config_.ablations.no_reasoning) {
    const auto rdir = reason_dir();
    if (!fs::exists(rdir / "done.json")) {
      throw MissingArtifactError("reasoning cache not found under " + rdir.string(), "reason");
    }
    for (const auto& [id, record] : read_cache(rdir / "reasoning.jsonl")) {
      auto& entities = reasoned[id];
      for (const auto& e : record.at("resolved")) entities.push_back(g.entity_index(e.get<std::string>()));
    }
  }

  fs::create_directories(dir);
  const auto cache_path = dir / "rerank.jsonl";
  const auto cached = read_cache(cache_path);
  compact_cache(cache_path, cached);
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    if (!cached.contains(query_id(g, rankings[i].query))) todo.push_back(i);
  }
  spdlog::info("rerank: {} queries, {} cached", rankings.size(), rankings.size() - todo.size());

  auto llm = chat_model(Stage::kRerank);
  llm->set_audit_log(std::make_shared<AuditLog>(dir / "audit.jsonl"));
  const auto& ctx = prompt_contexts();
  std::mutex out_mutex;
  std::ofstream out(cache_path, std::ios::app);
  if (!out) throw Error("cannot append to " + cache_path.string());

  parallel_for(todo.size(), llm->max_concurrency(), [&](std::size_t j) {
    const auto& ranked = rankings[todo[j]];
    const auto id = query_id(g, ranked.query);
    std::span<const EntityIdx> answers;
    if (!config_.ablations.no_reasoning) {
      auto it = reasoned.find(id);
      if (it == reasoned.end()) {
        throw MissingArtifactError("reasoning cache has no entry for query " + id, "reason");
      }
      answers = it->second;
    }
    const auto outcome = rerank_query(g, ctx, config_, ranked, answers, *llm);
    json candidates = json::array();
    json sources = json::array();
    for (std::size_t i = 0; i < outcome.candidates.members.size(); ++i) {
      candidates.push_back(g.entity(outcome.candidates.members[i]));
      sources.push_back(to_string(outcome.candidates.sources[i]));
    }
    json facts = json::array();
    for (const auto& f : outcome.facts) facts.push_back(triple_json(g, f));
    json record{{"query_id", id},
                {"candidates", candidates},
                {"sources", sources},
                {"llm_raw", outcome.raw},
                {"selected", g.entity(outcome.match.entity)},
                {"match", to_string(outcome.match.kind)},
                {"neighbor_facts", facts}};
    std::lock_guard lock(out_mutex);
    out << record.dump() << '\n';
    out.flush();
  });
  write_json(dir / "done.json", {{"key", rerank_key()}, {"queries", rankings.size()}});
}

Comparison Pipeline::evaluate() {
  const auto& g = graph();
  const auto dir = eval_dir();
  if (fs::exists(dir / "report.json")) {
    spdlog::info("evaluate: up to date ({})", dir.string());
    return read_report(dir / "report.json");
  }
  const auto rankings = load_rankings();
  const auto rdir = rerank_dir();
  if (!fs::exists(rdir / "done.json")) {
    throw MissingArtifactError("re-ranking cache not found under " + rdir.string(), "rerank");
  }
  const auto cache = read_cache(rdir / "rerank.jsonl");

  std::vector<RankRecord> base, reranked;
  json per_query = json::array();
  for (const auto& ranked : rankings) {
    const auto id = query_id(g, ranked.query);
    auto it = cache.find(id);
    if (it == cache.end()) throw MissingArtifactError("re-ranking cache has no entry for " + id, "rerank");
    CandidateSet set;
    set.query = ranked.query;
    for (const auto& e : it->second.at("candidates")) set.members.push_back(g.entity_index(e.get<std::string>()));
    set.sources.assign(set.members.size(), CandidateSource::kBase);
    const auto result = reorder(ranked, set, g.entity_index(it->second.at("selected").get<std::string>()));
    base.push_back(filtered_rank(ranked.order, ranked.query, g));
    reranked.push_back(filtered_rank(result.final_order, ranked.query, g));
    per_query.push_back({{"query_id", id},
                         {"base_rank", base.back().filtered_rank},
                         {"reranked_rank", reranked.back().filtered_rank}});
  }
  auto comparison = compare(compute_metrics(base), compute_metrics(reranked), config_.label);

  fs::create_directories(dir);
  {
    std::ofstream out(dir / "ranks.jsonl");
    for (const auto& r : per_query) out << r.dump() << '\n';
  }
  write_report(dir / "report", comparison);
  const auto now = utc_timestamp();
  const auto digest = config_.digest();
  append_metric_record(config_.output_dir / "metrics.jsonl",
                       {config_.label + "/base", digest, comparison.base.overall, now});
  append_metric_record(config_.output_dir / "metrics.jsonl",
                       {config_.label + "/reranked", digest, comparison.reranked.overall, now});
  return comparison;
}

Comparison Pipeline::run_all() {
  if (config_.base_import.empty()) {
    train_embed();
  } else {
    import_rankings();
  }
  build_sft();
  reason();
  rerank();
  auto comparison = evaluate();
  write_manifest("run-all", comparison);
  return comparison;
}

void Pipeline::write_manifest(const std::string& command, const std::optional<Comparison>& metrics) {
  json inputs = json::object();
  auto add = [&](const char* name, const fs::path& p) {
    if (!p.empty()) inputs[name] = {{"path", p.string()}, {"sha1", input_hash(p)}};
  };
  add("train", config_.train_path);
  add("valid", config_.valid_path);
  add("test", config_.test_path);
  add("contexts", config_.contexts_path);
  add("import", config_.base_import);
  add("reasoning_transcript", config_.reasoning_llm.transcript);
  add("rerank_transcript", config_.rerank_llm.transcript);
  json stages{{"embed", embed_dir().filename().string()},
              {"sft", sft_dir().filename().string()},
              {"reason", config_.ablations.no_reasoning ? json(nullptr) : json(reason_dir().filename().string())},
              {"rerank", rerank_dir().filename().string()}};
  json manifest{{"command", command},
                {"label", config_.label},
                {"config_digest", config_.digest()},
                {"config", config_.document},
                {"inputs", inputs},
                {"stages", stages},
                {"metrics", metrics ? to_json(*metrics) : json(nullptr)},
                {"timestamp", utc_timestamp()}};
  write_json(config_.output_dir / "manifest.json", manifest);
}

}  // namespace kgr3
