#include "dsiforge/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <sstream>

#include "builtin_data.hpp"
#include "dsiforge/checkpoint.hpp"
#include "dsiforge/error.hpp"
#include "dsiforge/rng.hpp"
#include <nlohmann/json.hpp>

namespace dsi {

using nlohmann::json;

std::size_t StructureGraph::index_of(const std::string& state) const {
  auto it = std::find(states.begin(), states.end(), state);
  if (it == states.end()) throw ConfigError("unknown state '" + state + "'");
  return static_cast<std::size_t>(it - states.begin());
}

void StructureGraph::validate() const {
  const std::size_t n = states.size();
  if (n == 0) throw ConfigError("structure graph has no states");
  if (start.size() != n || transitions.size() != n || terminal.size() != n) {
    throw ConfigError("structure graph: start/transitions/terminals do not match state count");
  }
  auto check_row = [](const std::vector<double>& row, const std::string& what) {
    double s = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw ConfigError(what + " has a negative or NaN entry");
      s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) {
      throw ConfigError(what + " sums to " + std::to_string(s) + ", expected 1");
    }
  };
  check_row(start, "start distribution");
  for (std::size_t i = 0; i < n; ++i) {
    if (transitions[i].size() != n) {
      throw ConfigError("transition row '" + states[i] + "' has the wrong length");
    }
    check_row(transitions[i], "transition row '" + states[i] + "'");
  }
  // Backward reachability from terminal states.
  std::vector<bool> reaches(n, false);
  std::deque<std::size_t> queue;
  for (std::size_t i = 0; i < n; ++i) {
    if (terminal[i]) {
      reaches[i] = true;
      queue.push_back(i);
    }
  }
  while (!queue.empty()) {
    const std::size_t j = queue.front();
    queue.pop_front();
    for (std::size_t i = 0; i < n; ++i) {
      if (!reaches[i] && transitions[i][j] > 0.0) {
        reaches[i] = true;
        queue.push_back(i);
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!reaches[i]) throw ConfigError("state '" + states[i] + "' cannot reach a terminal state");
  }
}

std::string to_dot(const StructureGraph& graph, double min_prob) {
  auto fmt3 = [](double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", p);
    return std::string(buf);
  };
  std::ostringstream out;
  out << "digraph dialog_structure {\n";
  out << "  rankdir=LR;\n";
  out << "  __start__ [shape=point];\n";
  for (std::size_t i = 0; i < graph.size(); ++i) {
    out << "  \"" << graph.states[i] << "\" [shape="
        << (graph.terminal.at(i) ? "doublecircle" : "circle") << "];\n";
  }
  for (std::size_t i = 0; i < graph.size(); ++i) {
    if (graph.start[i] >= min_prob && graph.start[i] > 0.0) {
      out << "  __start__ -> \"" << graph.states[i] << "\" [label=\"" << fmt3(graph.start[i])
          << "\"];\n";
    }
  }
  for (std::size_t i = 0; i < graph.size(); ++i) {
    for (std::size_t j = 0; j < graph.size(); ++j) {
      const double p = graph.transitions[i][j];
      if (p > 0.0 && p >= min_prob) {
        out << "  \"" << graph.states[i] << "\" -> \"" << graph.states[j] << "\" [label=\""
            << fmt3(p) << "\"];\n";
      }
    }
  }
  out << "}\n";
  return out.str();
}

void GeneratorConfig::validate() const {
  graph.validate();
  if (max_len < 2) throw ConfigError("max_len must be at least 2");
  if (domains.empty()) throw ConfigError("generator needs at least one domain");
  for (const std::string& s : graph.states) {
    auto it = templates.find(s);
    if (it == templates.end() || it->second.empty()) {
      throw ConfigError("state '" + s + "' has no utterance templates");
    }
    for (const std::string& tpl : it->second) {
      std::istringstream in(tpl);
      std::string tok;
      while (in >> tok) {
        if (tok.size() < 3 || tok.front() != '{' || tok.back() != '}') continue;
        const std::string slot = tok.substr(1, tok.size() - 2);
        for (const auto& [domain, slots] : domains) {
          auto sit = slots.find(slot);
          if (sit == slots.end() || sit->second.empty()) {
            throw ConfigError("template '" + tpl + "' uses slot '" + slot +
                              "' missing from domain '" + domain + "'");
          }
        }
      }
    }
  }
  for (const auto& [state, tpls] : templates) {
    graph.index_of(state);
    (void)tpls;
  }
}

GeneratorConfig parse_generator_config(const std::string& json_text) {
  GeneratorConfig cfg;
  try {
    const json j = json::parse(json_text);
    cfg.graph.states = j.at("states").get<std::vector<std::string>>();
    const std::size_t n = cfg.graph.states.size();
    cfg.graph.start = j.at("start").get<std::vector<double>>();
    const json& tr = j.at("transitions");
    if (!tr.empty() && tr[0].is_array()) {
      cfg.graph.transitions = tr.get<std::vector<std::vector<double>>>();
    } else {
      const auto flat = tr.get<std::vector<double>>();
      if (flat.size() != n * n) throw ConfigError("flat transitions must have states^2 entries");
      for (std::size_t i = 0; i < n; ++i) {
        cfg.graph.transitions.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(i * n),
                                           flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
      }
    }
    cfg.graph.terminal.assign(n, false);
    for (const std::string& t : j.at("terminals").get<std::vector<std::string>>()) {
      cfg.graph.terminal[cfg.graph.index_of(t)] = true;
    }
    cfg.templates = j.at("templates").get<std::map<std::string, std::vector<std::string>>>();
    cfg.domains = j.at("domains")
                      .get<std::map<std::string, std::map<std::string, std::vector<std::string>>>>();
    cfg.max_len = j.value("max_len", std::size_t{10});
    cfg.seed = j.value("seed", std::uint64_t{0});
  } catch (const json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

GeneratorConfig load_generator_config(const std::string& path) {
  return parse_generator_config(read_file(path));
}

std::string generator_config_to_json(const GeneratorConfig& cfg) {
  json j;
  j["states"] = cfg.graph.states;
  j["start"] = cfg.graph.start;
  j["transitions"] = cfg.graph.transitions;
  std::vector<std::string> terms;
  for (std::size_t i = 0; i < cfg.graph.size(); ++i) {
    if (cfg.graph.terminal[i]) terms.push_back(cfg.graph.states[i]);
  }
  j["terminals"] = terms;
  j["templates"] = cfg.templates;
  j["domains"] = cfg.domains;
  j["max_len"] = cfg.max_len;
  j["seed"] = cfg.seed;
  return j.dump(2);
}

GeneratorConfig builtin_multiwoz_like_config() {
  return parse_generator_config(data::kMultiwozLikeConfig);
}

GeneratorConfig builtin_chain_config() { return parse_generator_config(data::kChainConfig); }

namespace {

std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace

DialogCorpus generate_corpus(const GeneratorConfig& cfg, std::size_t n) {
  if (n == 0) throw ConfigError("generate_corpus: dialog count must be >= 1");
  cfg.validate();
  const Rng root(cfg.seed);
  std::vector<std::string> domain_names;
  for (const auto& [name, slots] : cfg.domains) domain_names.push_back(name);

  DialogCorpus corpus;
  corpus.dialogs.reserve(n);
  char idbuf[32];
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = root.split(i);
    Dialog d;
    std::snprintf(idbuf, sizeof idbuf, "d%06zu", i);
    d.id = idbuf;
    d.domain = domain_names[rng.uniform_int(domain_names.size())];
    const auto& slots = cfg.domains.at(d.domain);
    std::size_t state = rng.categorical(cfg.graph.start);
    for (std::size_t t = 0; t < cfg.max_len; ++t) {
      const std::string& name = cfg.graph.states[state];
      const auto& tpls = cfg.templates.at(name);
      const std::string& tpl = tpls[rng.uniform_int(tpls.size())];
      Turn turn;
      turn.speaker = static_cast<int>(t % 2);
      turn.state = name;
      for (const std::string& tok : split_ws(tpl)) {
        if (tok.size() >= 3 && tok.front() == '{' && tok.back() == '}') {
          const auto& fillers = slots.at(tok.substr(1, tok.size() - 2));
          for (std::string& f : split_ws(fillers[rng.uniform_int(fillers.size())])) {
            turn.tokens.push_back(std::move(f));
          }
        } else {
          turn.tokens.push_back(tok);
        }
      }
      d.turns.push_back(std::move(turn));
      if (cfg.graph.terminal[state]) break;
      state = rng.categorical(cfg.graph.transitions[state]);
    }
    corpus.dialogs.push_back(std::move(d));
  }

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng split_rng = root.split(0xC0FFEEULL ^ (static_cast<std::uint64_t>(n) << 20));
  split_rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  for (std::size_t r = 0; r < n; ++r) {
    Split s = r < n_train ? Split::kTrain : (r < n_train + n_test ? Split::kTest : Split::kValidation);
    corpus.dialogs[order[r]].split = s;
  }
  return corpus;
}

}  // namespace dsi
