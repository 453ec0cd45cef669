#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "kgr3/error.hpp"
#include "kgr3/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kConfig = 2, kMissing = 3 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Knowledge graph completion by retrieval, reasoning and LLM re-ranking"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string log_level = "info";
  app.add_option("-c,--config", config_path, "Pipeline config (JSON)")->required()->check(CLI::ExistingFile);
  app.add_option("--stage-override", overrides, "Override a config value: dotted.key=value (repeatable)");
  app.add_option("--seed", seed, "Seed for training, sampling and shuffles");
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error"}));

  const std::vector<std::pair<std::string, std::string>> commands{
      {"train-embed", "Train the base embedding model and rank the evaluation queries"},
      {"import-rankings", "Import externally produced base rankings"},
      {"build-sft", "Write the supervised fine-tuning dataset for the re-ranker"},
      {"reason", "Query the reasoning LLM for every evaluation query"},
      {"rerank", "Compose candidates and query the re-ranking LLM"},
      {"evaluate", "Score base and re-ranked orderings and write the report"},
      {"run-all", "Run every stage in order, reusing cached stages"},
      {"show-config", "Print the effective config after overrides"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::from_str(log_level));
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    auto config = kgr3::PipelineConfig::load(config_path, overrides, seed);
    if (command == "show-config") {
      std::cout << config.document.dump(2) << '\n';
      return kOk;
    }
    kgr3::Pipeline pipeline(std::move(config));
    std::optional<kgr3::Comparison> metrics;
    if (command == "train-embed") {
      pipeline.train_embed();
    } else if (command == "import-rankings") {
      pipeline.import_rankings();
    } else if (command == "build-sft") {
      pipeline.build_sft();
    } else if (command == "reason") {
      pipeline.reason();
    } else if (command == "rerank") {
      pipeline.rerank();
    } else if (command == "evaluate") {
      metrics = pipeline.evaluate();
    } else if (command == "run-all") {
      metrics = pipeline.run_all();
    }
    if (metrics) std::cout << kgr3::render_table(*metrics);
    pipeline.write_manifest(command, metrics);
    return kOk;
  } catch (const kgr3::MissingArtifactError& e) {
    spdlog::error("{}; run `kgr3 {}` first", e.what(), e.required_command());
    return kMissing;
  } catch (const kgr3::ConfigError& e) {
    spdlog::error("{}", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kFailure;
  }
}
