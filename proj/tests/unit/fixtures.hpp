#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "kgr3/kg.hpp"
#include "kgr3/llm.hpp"

namespace kgr3::testing {

inline std::filesystem::path data_dir() { return KGR3_TEST_DATA; }

inline KnowledgeGraph graph_of(const std::vector<Triple>& train, const std::vector<Triple>& valid = {},
                               const std::vector<Triple>& test = {}) {
  return KnowledgeGraph::build(train, valid, test);
}

inline KnowledgeGraph toy_graph() { return KnowledgeGraph::load_dir(data_dir() / "toy"); }
inline ContextStore toy_contexts() { return ContextStore::load(data_dir() / "toy" / "contexts.json"); }

// Fresh scratch directory under the build tree, removed on construction.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::path(KGR3_TEST_SCRATCH) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// "[role]\n<content>\n" per message; the layout of the golden files.
inline std::string render_transcript(const std::vector<ChatMessage>& messages) {
  std::string out;
  for (const auto& m : messages) out += "[" + std::string(to_string(m.role)) + "]\n" + m.content + "\n";
  return out;
}

inline std::string read_golden(const std::string& name) {
  std::ifstream in(std::filesystem::path(KGR3_GOLDEN_DIR) / name, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace kgr3::testing
