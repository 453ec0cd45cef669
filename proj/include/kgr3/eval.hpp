#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "kgr3/embed.hpp"
#include "kgr3/kg.hpp"

namespace kgr3 {

struct RankRecord {
  Query query;
  std::size_t raw_rank = 0;       // 1-based
  std::size_t filtered_rank = 0;  // 1-based, other true completions ignored
};

// Filtered setting: entities ranked above the ground truth that complete the
// query to a triple in train ∪ valid ∪ test do not count.
RankRecord filtered_rank(std::span<const EntityIdx> order, const Query& query,
                         const KnowledgeGraph& graph);

struct Metrics {
  double mrr = 0.0;
  double hits1 = 0.0;
  double hits3 = 0.0;
  double hits10 = 0.0;
  std::size_t count = 0;

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

struct MetricReport {
  Metrics overall;
  Metrics head;  // count 0 when no head queries
  Metrics tail;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

// Throws Error on empty input.
MetricReport compute_metrics(std::span<const RankRecord> records);
Metrics compute_metrics_from_ranks(std::span<const std::size_t> filtered_ranks);

struct Comparison {
  std::string label;
  MetricReport base;
  MetricReport reranked;

  friend bool operator==(const Comparison&, const Comparison&) = default;
};

// Throws Error when the two reports cover different query counts.
Comparison compare(const MetricReport& base, const MetricReport& reranked, std::string label);
std::string render_table(const Comparison& comparison);

nlohmann::json to_json(const Metrics& metrics);
nlohmann::json to_json(const MetricReport& report);
nlohmann::json to_json(const Comparison& comparison);
Metrics metrics_from_json(const nlohmann::json& j);
MetricReport metric_report_from_json(const nlohmann::json& j);
Comparison comparison_from_json(const nlohmann::json& j);

// Writes <stem>.txt (table) and <stem>.json (machine-readable).
void write_report(const std::filesystem::path& stem, const Comparison& comparison);
Comparison read_report(const std::filesystem::path& json_path);

struct MetricRecord {
  std::string run_id;
  std::string config_digest;
  Metrics metrics;
  std::string timestamp;
};

// Appends one line to a line-delimited metric log.
void append_metric_record(const std::filesystem::path& path, const MetricRecord& record);

}  // namespace kgr3
