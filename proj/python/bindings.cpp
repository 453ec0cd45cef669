#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <nlohmann/json.hpp>

#include "kgr3/embed.hpp"
#include "kgr3/error.hpp"
#include "kgr3/eval.hpp"
#include "kgr3/kg.hpp"
#include "kgr3/pipeline.hpp"
#include "kgr3/reasoning.hpp"
#include "kgr3/rerank.hpp"

namespace py = pybind11;
using namespace kgr3;

namespace {

using TripleTuple = std::tuple<std::string, std::string, std::string>;

std::vector<Triple> to_triples(const std::vector<TripleTuple>& rows) {
  std::vector<Triple> out;
  out.reserve(rows.size());
  for (const auto& [h, r, t] : rows) out.push_back({h, r, t});
  return out;
}

py::object to_python(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

Split parse_split_name(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw ConfigError("unknown split '" + name + "'");
}

Query make_query(const KnowledgeGraph& g, const std::string& direction, const std::string& known,
                 const std::string& relation, const std::optional<std::string>& ground_truth) {
  if (direction != "head" && direction != "tail") throw ConfigError("direction must be 'head' or 'tail'");
  Query q;
  q.direction = direction == "head" ? Direction::kHead : Direction::kTail;
  q.known = g.entity_index(known);
  q.relation = g.relation_index(relation);
  if (ground_truth) q.ground_truth = g.entity_index(*ground_truth);
  return q;
}

RankedEntityList ranking_from_ids(const KnowledgeGraph& g, const std::vector<std::string>& ids) {
  RankedEntityList r;
  for (const auto& id : ids) r.order.push_back(g.entity_index(id));
  check_permutation(r.order, g.num_entities(), "ranking");
  r.scores.resize(r.order.size());
  for (std::size_t i = 0; i < r.order.size(); ++i) r.scores[i] = -static_cast<double>(i);
  return r;
}

std::vector<std::string> ids_of(const KnowledgeGraph& g, const std::vector<EntityIdx>& idx) {
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (auto e : idx) out.push_back(g.entity(e));
  return out;
}

std::vector<EntityIdx> indices_of(const KnowledgeGraph& g, const std::vector<std::string>& ids) {
  std::vector<EntityIdx> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(g.entity_index(id));
  return out;
}

}  // namespace

PYBIND11_MODULE(_kgr3, m) {
  m.doc() = "Knowledge graph completion: base embeddings, LLM reasoning and re-ranking";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<MissingArtifactError>(m, "MissingArtifactError", error.ptr());

  py::class_<KnowledgeGraph>(m, "KnowledgeGraph")
      .def_static("load_dir", &KnowledgeGraph::load_dir, py::arg("directory"))
      .def_static(
          "build",
          [](const std::vector<TripleTuple>& train, const std::vector<TripleTuple>& valid,
             const std::vector<TripleTuple>& test) {
            return KnowledgeGraph::build(to_triples(train), to_triples(valid), to_triples(test));
          },
          py::arg("train"), py::arg("valid") = std::vector<TripleTuple>{},
          py::arg("test") = std::vector<TripleTuple>{})
      .def_property_readonly("num_entities", &KnowledgeGraph::num_entities)
      .def_property_readonly("num_relations", &KnowledgeGraph::num_relations)
      .def_property_readonly("entities", &KnowledgeGraph::entities)
      .def_property_readonly("relations", &KnowledgeGraph::relations)
      .def("split",
           [](const KnowledgeGraph& g, const std::string& name) {
             std::vector<TripleTuple> out;
             for (const auto& t : g.split(parse_split_name(name))) {
               auto plain = g.to_triple(t);
               out.emplace_back(plain.head, plain.relation, plain.tail);
             }
             return out;
           },
           py::arg("name"))
      .def("is_true", [](const KnowledgeGraph& g, const std::string& h, const std::string& r,
                         const std::string& t) {
        auto hi = g.find_entity(h), ti = g.find_entity(t);
        auto ri = g.find_relation(r);
        return hi && ti && ri && g.is_true(*hi, *ri, *ti);
      });

  py::class_<ContextStore>(m, "ContextStore")
      .def(py::init<>())
      .def_static("load", &ContextStore::load, py::arg("path"))
      .def_static("parse", &ContextStore::parse, py::arg("json_text"))
      .def("label", &ContextStore::label, py::arg("entity"))
      .def("description", &ContextStore::description, py::arg("entity"))
      .def("resolve", &ContextStore::resolve, py::arg("surface"))
      .def("__len__", &ContextStore::size);

  py::class_<ScoringModel>(m, "ScoringModel")
      .def_static("load", &ScoringModel::load, py::arg("path"))
      .def("save", &ScoringModel::save, py::arg("path"))
      .def_property_readonly("kind", [](const ScoringModel& s) { return std::string(to_string(s.kind())); })
      .def_property_readonly("dimension", &ScoringModel::dimension)
      .def("score",
           py::overload_cast<std::string_view, std::string_view, std::string_view>(&ScoringModel::score,
                                                                                  py::const_),
           py::arg("head"), py::arg("relation"), py::arg("tail"));

  m.def(
      "train",
      [](const KnowledgeGraph& g, const std::string& kind, int dimension, int epochs, double learning_rate,
         double margin, std::uint64_t seed) {
        TrainConfig cfg;
        cfg.dimension = dimension;
        cfg.epochs = epochs;
        cfg.learning_rate = learning_rate;
        cfg.margin = margin;
        cfg.seed = seed;
        TrainReport report;
        ScoringModel model;
        {
          py::gil_scoped_release release;
          model = train(g, parse_model_kind(kind), cfg, &report);
        }
        return std::make_pair(std::move(model), report.epoch_loss);
      },
      py::arg("graph"), py::arg("kind") = "TransE", py::arg("dimension") = 32, py::arg("epochs") = 200,
      py::arg("learning_rate") = 0.01, py::arg("margin") = 1.0, py::arg("seed") = 42,
      "Trains a base model; returns (model, per-epoch loss).");

  m.def(
      "rank",
      [](const ScoringModel& model, const KnowledgeGraph& g, const std::string& direction,
         const std::string& known, const std::string& relation) {
        return ids_of(g, rank_entities(model, make_query(g, direction, known, relation, std::nullopt)).order);
      },
      py::arg("model"), py::arg("graph"), py::arg("direction"), py::arg("known"), py::arg("relation"),
      "Every entity id, most plausible first.");

  m.def("verbalize_relation", &verbalize_relation, py::arg("relation"));
  m.def("parse_answers", &parse_answers, py::arg("text"));

  m.def(
      "compose_candidates",
      [](const KnowledgeGraph& g, const std::vector<std::string>& ranking,
         const std::vector<std::string>& reasoned, std::size_t n, std::size_t p) {
        const auto set = compose_candidates(ranking_from_ids(g, ranking), indices_of(g, reasoned), n, p);
        return ids_of(g, set.members);
      },
      py::arg("graph"), py::arg("ranking"), py::arg("reasoned"), py::arg("n") = 20, py::arg("p") = 10);

  m.def(
      "reorder",
      [](const KnowledgeGraph& g, const std::vector<std::string>& ranking, const std::vector<std::string>& members,
         const std::string& selected) {
        CandidateSet set;
        set.members = indices_of(g, members);
        set.sources.assign(set.members.size(), CandidateSource::kBase);
        return ids_of(g, reorder(ranking_from_ids(g, ranking), set, g.entity_index(selected)).final_order);
      },
      py::arg("graph"), py::arg("ranking"), py::arg("members"), py::arg("selected"));

  m.def(
      "reasoning_prompt",
      [](const KnowledgeGraph& g, const ContextStore& ctx, const std::string& direction, const std::string& known,
         const std::string& relation, std::size_t k, const std::string& mode) {
        const auto q = make_query(g, direction, known, relation, std::nullopt);
        const auto supports = retrieve_supporting_triples(g, nullptr, q, k);
        std::vector<std::pair<std::string, std::string>> out;
        for (const auto& msg : build_reasoning_prompt(g, ctx, q, supports, parse_reasoning_mode(mode))) {
          out.emplace_back(std::string(to_string(msg.role)), msg.content);
        }
        return out;
      },
      py::arg("graph"), py::arg("contexts"), py::arg("direction"), py::arg("known"), py::arg("relation"),
      py::arg("k") = 3, py::arg("mode") = "context-aware", "List of (role, content) pairs.");

  m.def(
      "filtered_rank",
      [](const KnowledgeGraph& g, const std::vector<std::string>& ranking, const std::string& direction,
         const std::string& known, const std::string& relation, const std::string& ground_truth) {
        const auto q = make_query(g, direction, known, relation, ground_truth);
        return filtered_rank(indices_of(g, ranking), q, g).filtered_rank;
      },
      py::arg("graph"), py::arg("ranking"), py::arg("direction"), py::arg("known"), py::arg("relation"),
      py::arg("ground_truth"));

  m.def(
      "compute_metrics",
      [](const std::vector<std::size_t>& ranks) { return to_python(to_json(compute_metrics_from_ranks(ranks))); },
      py::arg("ranks"), "MRR and Hits@1/3/10 of 1-based filtered ranks.");

  m.def(
      "write_sft_dataset",
      [](const std::filesystem::path& path, const KnowledgeGraph& g, const ContextStore& ctx, std::uint64_t seed,
         std::size_t max_samples) {
        SftConfig cfg;
        cfg.seed = seed;
        cfg.max_samples = max_samples;
        py::gil_scoped_release release;
        return write_sft_dataset(path, g, ctx, cfg);
      },
      py::arg("path"), py::arg("graph"), py::arg("contexts"), py::arg("seed") = 42, py::arg("max_samples") = 0);

  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init([](const std::filesystem::path& config, const std::vector<std::string>& overrides,
                       std::optional<std::uint64_t> seed) {
             return std::make_unique<Pipeline>(PipelineConfig::load(config, overrides, seed));
           }),
           py::arg("config"), py::arg("overrides") = std::vector<std::string>{}, py::arg("seed") = py::none())
      .def("train_embed", &Pipeline::train_embed, py::call_guard<py::gil_scoped_release>())
      .def("import_rankings", &Pipeline::import_rankings, py::call_guard<py::gil_scoped_release>())
      .def("build_sft", &Pipeline::build_sft, py::call_guard<py::gil_scoped_release>())
      .def("reason", &Pipeline::reason, py::call_guard<py::gil_scoped_release>())
      .def("rerank", &Pipeline::rerank, py::call_guard<py::gil_scoped_release>())
      .def("evaluate",
           [](Pipeline& p) {
             Comparison c;
             {
               py::gil_scoped_release release;
               c = p.evaluate();
             }
             return to_python(to_json(c));
           })
      .def("run_all",
           [](Pipeline& p) {
             Comparison c;
             {
               py::gil_scoped_release release;
               c = p.run_all();
             }
             p.write_manifest("run-all", c);
             return to_python(to_json(c));
           })
      .def_property_readonly("output_dir", [](const Pipeline& p) { return p.config().output_dir; })
      .def_property_readonly("config", [](const Pipeline& p) { return to_python(p.config().document); });
}
