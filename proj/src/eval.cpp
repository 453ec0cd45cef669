#include "kgr3/eval.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "kgr3/error.hpp"

namespace kgr3 {

using json = nlohmann::json;

RankRecord filtered_rank(std::span<const EntityIdx> order, const Query& query,
                         const KnowledgeGraph& graph) {
  if (!query.ground_truth) throw Error("filtered_rank: query has no ground truth");
  const EntityIdx truth = *query.ground_truth;
  std::size_t before = 0;
  std::size_t competing = 0;
  for (auto e : order) {
    if (e == truth) {
      RankRecord record{query, before + 1, before - competing + 1};
      return record;
    }
    ++before;
    const bool is_true = query.direction == Direction::kTail
                             ? graph.is_true(query.known, query.relation, e)
                             : graph.is_true(e, query.relation, query.known);
    if (is_true) ++competing;
  }
  throw Error("filtered_rank: ground truth '" + graph.entity(truth) + "' missing from ordering");
}

Metrics compute_metrics_from_ranks(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw Error("compute_metrics: no rank records");
  Metrics m;
  std::size_t h1 = 0, h3 = 0, h10 = 0;
  double rr = 0.0;
  for (auto rank : ranks) {
    if (rank == 0) throw Error("compute_metrics: ranks are 1-based");
    rr += 1.0 / static_cast<double>(rank);
    h1 += rank <= 1;
    h3 += rank <= 3;
    h10 += rank <= 10;
  }
  const double n = static_cast<double>(ranks.size());
  m.mrr = rr / n;
  m.hits1 = static_cast<double>(h1) / n;
  m.hits3 = static_cast<double>(h3) / n;
  m.hits10 = static_cast<double>(h10) / n;
  m.count = ranks.size();
  return m;
}

MetricReport compute_metrics(std::span<const RankRecord> records) {
  if (records.empty()) throw Error("compute_metrics: no rank records");
  std::vector<std::size_t> all, head, tail;
  for (const auto& r : records) {
    all.push_back(r.filtered_rank);
    (r.query.direction == Direction::kHead ? head : tail).push_back(r.filtered_rank);
  }
  MetricReport report;
  report.overall = compute_metrics_from_ranks(all);
  if (!head.empty()) report.head = compute_metrics_from_ranks(head);
  if (!tail.empty()) report.tail = compute_metrics_from_ranks(tail);
  return report;
}

Comparison compare(const MetricReport& base, const MetricReport& reranked, std::string label) {
  if (base.overall.count != reranked.overall.count) {
    throw Error("report: base covers " + std::to_string(base.overall.count) +
                " queries but re-ranked covers " + std::to_string(reranked.overall.count));
  }
  return {std::move(label), base, reranked};
}

std::string render_table(const Comparison& c) {
  std::ostringstream out;
  char line[160];
  out << "# " << c.label << " (" << c.base.overall.count << " queries)\n";
  std::snprintf(line, sizeof(line), "%-10s %10s %10s %10s %10s\n", "", "MRR", "Hits@1", "Hits@3",
                "Hits@10");
  out << line;
  auto row = [&](const char* name, double mrr, double h1, double h3, double h10, bool signed_values) {
    const char* fmt = signed_values ? "%-10s %+10.4f %+10.4f %+10.4f %+10.4f\n"
                                    : "%-10s %10.4f %10.4f %10.4f %10.4f\n";
    std::snprintf(line, sizeof(line), fmt, name, mrr, h1, h3, h10);
    out << line;
  };
  const auto& b = c.base.overall;
  const auto& r = c.reranked.overall;
  row("base", b.mrr, b.hits1, b.hits3, b.hits10, false);
  row("reranked", r.mrr, r.hits1, r.hits3, r.hits10, false);
  row("delta", r.mrr - b.mrr, r.hits1 - b.hits1, r.hits3 - b.hits3, r.hits10 - b.hits10, true);
  return out.str();
}

json to_json(const Metrics& m) {
  return json{{"mrr", m.mrr},       {"hits@1", m.hits1}, {"hits@3", m.hits3},
              {"hits@10", m.hits10}, {"count", m.count}};
}

json to_json(const MetricReport& r) {
  return json{{"overall", to_json(r.overall)}, {"head", to_json(r.head)}, {"tail", to_json(r.tail)}};
}

json to_json(const Comparison& c) {
  const auto& b = c.base.overall;
  const auto& r = c.reranked.overall;
  return json{{"label", c.label},
              {"base", to_json(c.base)},
              {"reranked", to_json(c.reranked)},
              {"delta",
               {{"mrr", r.mrr - b.mrr},
                {"hits@1", r.hits1 - b.hits1},
                {"hits@3", r.hits3 - b.hits3},
                {"hits@10", r.hits10 - b.hits10}}}};
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.mrr = j.at("mrr").get<double>();
  m.hits1 = j.at("hits@1").get<double>();
  m.hits3 = j.at("hits@3").get<double>();
  m.hits10 = j.at("hits@10").get<double>();
  m.count = j.at("count").get<std::size_t>();
  return m;
}

MetricReport metric_report_from_json(const json& j) {
  return {metrics_from_json(j.at("overall")), metrics_from_json(j.at("head")),
          metrics_from_json(j.at("tail"))};
}

Comparison comparison_from_json(const json& j) {
  return {j.at("label").get<std::string>(), metric_report_from_json(j.at("base")),
          metric_report_from_json(j.at("reranked"))};
}

void write_report(const std::filesystem::path& stem, const Comparison& comparison) {
  auto txt = stem;
  txt += ".txt";
  auto js = stem;
  js += ".json";
  std::ofstream table(txt);
  std::ofstream record(js);
  if (!table || !record) throw Error("cannot write report " + stem.string());
  table << render_table(comparison);
  record << to_json(comparison).dump(2) << '\n';
}

Comparison read_report(const std::filesystem::path& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error("cannot open report " + json_path.string());
  return comparison_from_json(json::parse(in));
}

void append_metric_record(const std::filesystem::path& path, const MetricRecord& record) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot append metric record to " + path.string());
  json j{{"run_id", record.run_id},
         {"config_digest", record.config_digest},
         {"mrr", record.metrics.mrr},
         {"hits@1", record.metrics.hits1},
         {"hits@3", record.metrics.hits3},
         {"hits@10", record.metrics.hits10},
         {"query_count", record.metrics.count},
         {"timestamp", record.timestamp}};
  out << j.dump() << '\n';
}

}  // namespace kgr3
