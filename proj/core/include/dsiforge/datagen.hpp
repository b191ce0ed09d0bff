#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dsiforge/corpus.hpp"
#include "dsiforge/tensor.hpp"

namespace dsi {

/// Directed dialog-structure graph: named states, a start distribution and a
/// row-stochastic transition matrix. Terminal states end a dialog.
struct StructureGraph {
  std::vector<std::string> states;
  std::vector<double> start;
  std::vector<std::vector<double>> transitions;
  std::vector<bool> terminal;

  std::size_t size() const { return states.size(); }
  std::size_t index_of(const std::string& state) const;
  /// Throws ConfigError when a row or the start vector is not stochastic
  /// (1e-9 tolerance) or some state cannot reach a terminal state.
  void validate() const;
};

/// Graphviz rendering; edges below min_prob are omitted, labels are rounded to
/// three decimals.
std::string to_dot(const StructureGraph& graph, double min_prob);

struct GeneratorConfig {
  StructureGraph graph;
  /// state -> templates; "{slot}" tokens are replaced from the domain lexicon.
  std::map<std::string, std::vector<std::string>> templates;
  /// domain -> slot -> fillers (fillers may span several tokens).
  std::map<std::string, std::map<std::string, std::vector<std::string>>> domains;
  std::size_t max_len = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

/// JSON keys: states, start, transitions (row-major, nested or flat),
/// terminals, templates, domains, max_len, seed.
GeneratorConfig parse_generator_config(const std::string& json_text);
GeneratorConfig load_generator_config(const std::string& path);
std::string generator_config_to_json(const GeneratorConfig& cfg);

/// The shipped nine-act, five-domain configuration.
GeneratorConfig builtin_multiwoz_like_config();
/// Deterministic greet -> request -> end chain with one template per state.
GeneratorConfig builtin_chain_config();

/// Samples n dialogs by walking the graph from the start distribution until a
/// terminal state or max_len, then assigns 80/10/10 train/test/validation
/// splits by a seeded permutation. Deterministic for a fixed seed.
DialogCorpus generate_corpus(const GeneratorConfig& cfg, std::size_t n);

}  // namespace dsi
