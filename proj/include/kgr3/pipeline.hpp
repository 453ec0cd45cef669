#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgr3/embed.hpp"
#include "kgr3/eval.hpp"
#include "kgr3/kg.hpp"
#include "kgr3/llm.hpp"
#include "kgr3/reasoning.hpp"
#include "kgr3/rerank.hpp"
#include "kgr3/retrieval.hpp"

namespace kgr3 {

struct Ablations {
  bool no_reasoning = false;
  bool no_descriptions = false;
  bool no_neighbor_facts = false;
};

// kind: "http", "oracle", "adversarial" or "scripted".
struct EndpointSpec {
  std::string kind = "http";
  LlmEndpointConfig http;
  std::filesystem::path transcript;
  std::string api_key_env = "KGR3_API_KEY";
};

struct PipelineConfig {
  std::filesystem::path train_path;
  std::filesystem::path valid_path;
  std::filesystem::path test_path;
  std::filesystem::path contexts_path;

  ModelKind base_kind = ModelKind::kTransE;
  std::filesystem::path base_import;  // empty: train the base model
  TrainConfig train;
  std::size_t ranking_prefix = 0;

  std::size_t k = 3;
  std::size_t n = 20;
  std::size_t p = 10;
  std::size_t delta = 50;
  std::size_t neighbor_limit = 3;
  ReasoningMode mode = ReasoningMode::kContextAware;
  SftConfig sft;
  EndpointSpec reasoning_llm;
  EndpointSpec rerank_llm;
  std::uint64_t seed = 42;
  Split eval_split = Split::kTest;
  std::filesystem::path output_dir = "runs/default";
  std::string label = "run";
  Ablations ablations;

  // The fully resolved document the fields above were read from.
  nlohmann::json document;

  // Defaults merged with `doc`; relative paths resolve against `base_dir`.
  static PipelineConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);
  // Reads a config file, then applies `key.path=value` overrides and the seed.
  static PipelineConfig load(const std::filesystem::path& path,
                             std::span<const std::string> overrides = {},
                             std::optional<std::uint64_t> seed = std::nullopt);

  // Checks p <= n <= num_entities, delta >= n.
  void validate(std::size_t num_entities) const;
  std::string digest() const;
};

nlohmann::json default_config_json();
// Applies "a.b.c=value"; value is parsed as JSON when possible, else kept as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

std::shared_ptr<ChatModel> make_chat_model(const EndpointSpec& spec);

// Lowercase hex of SHA-256 over `data`.
std::string sha256_hex(std::string_view data);
// Git blob id ("blob <len>\0" + content, SHA-1) of a file.
std::string git_blob_hash(const std::filesystem::path& path);

// --- per-query stage logic ------------------------------------------------

struct ReasoningOutcome {
  std::vector<SupportingTriple> supports;
  std::vector<ChatMessage> prompt;
  std::string raw;
  ReasonedAnswers answers;
};

// `contexts` is the store prompts are rendered from (descriptions already
// stripped under the no-descriptions ablation).
ReasoningOutcome reason_query(const KnowledgeGraph& graph, const ContextStore& contexts,
                              const ScoringModel* model, const PipelineConfig& config,
                              const RankedEntityList& ranked, ChatModel& llm);

struct RerankOutcome {
  CandidateSet candidates;
  NeighborFacts facts;
  std::vector<ChatMessage> prompt;
  std::string raw;
  MatchResult match;
  RerankResult result;
};

RerankOutcome rerank_query(const KnowledgeGraph& graph, const ContextStore& contexts,
                           const PipelineConfig& config, const RankedEntityList& ranked,
                           std::span<const EntityIdx> reasoned, ChatModel& llm);

// Runs fn(i) for i in [0, count) on up to `workers` threads. The first
// exception is rethrown after all workers stop.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

// --- stage orchestration ----------------------------------------------------

class Pipeline {
 public:
  // Takes the output directory lock; throws Error if another process holds it.
  explicit Pipeline(PipelineConfig config);
  ~Pipeline();
  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  // Replaces the chat model built from the config for one stage.
  void set_chat_model(Stage stage, std::shared_ptr<ChatModel> model);

  void train_embed();
  void import_rankings();
  std::size_t build_sft();
  void reason();
  void rerank();
  Comparison evaluate();
  Comparison run_all();

  const PipelineConfig& config() const { return config_; }
  const KnowledgeGraph& graph();
  const ContextStore& contexts();
  std::filesystem::path embed_dir();
  std::filesystem::path sft_dir();
  std::filesystem::path reason_dir();
  std::filesystem::path rerank_dir();
  std::filesystem::path eval_dir();

  // Writes <output_dir>/manifest.json for the given command.
  void write_manifest(const std::string& command, const std::optional<Comparison>& metrics);

 private:
  std::string input_hash(const std::filesystem::path& path);
  std::string embed_key();
  std::string sft_key();
  std::string reason_key();
  std::string rerank_key();
  const ContextStore& prompt_contexts();
  const ScoringModel* model();
  std::vector<RankedEntityList> load_rankings();
  std::string upstream_command() const;
  std::shared_ptr<ChatModel> chat_model(Stage stage);

  PipelineConfig config_;
  int lock_fd_ = -1;
  std::optional<KnowledgeGraph> graph_;
  std::optional<ContextStore> contexts_;
  std::optional<ContextStore> prompt_contexts_;
  std::optional<ScoringModel> model_;
  bool model_checked_ = false;
  std::map<std::filesystem::path, std::string> hashes_;
  std::map<Stage, std::shared_ptr<ChatModel>> injected_;
};

}  // namespace kgr3
