#include "dsiforge/grounding.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <set>
#include <sstream>

#include "dsiforge/checkpoint.hpp"
#include "dsiforge/error.hpp"

namespace dsi {

TokenClassTable TokenClassTable::parse(const std::string& text) {
  TokenClassTable table;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      table.provenance += line.substr(1);
      table.provenance += '\n';
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() != 3) {
      throw ConfigError("token table line " + std::to_string(lineno) +
                        ": expected token<TAB>class<TAB>weight");
    }
    Entry e{fields[0], fields[1], 0.0};
    try {
      std::size_t used = 0;
      e.weight = std::stod(fields[2], &used);
      if (used != fields[2].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("token table line " + std::to_string(lineno) + ": bad weight '" +
                        fields[2] + "'");
    }
    if (!(e.weight > 0.0)) {
      throw ConfigError("token table line " + std::to_string(lineno) + ": weight must be > 0");
    }
    table.entries.push_back(std::move(e));
  }
  return table;
}

TokenClassTable TokenClassTable::load(const std::string& path) { return parse(read_file(path)); }

std::string TokenClassTable::to_text() const {
  std::ostringstream out;
  std::istringstream prov(provenance);
  std::string line;
  while (std::getline(prov, line)) out << '#' << line << '\n';
  for (const Entry& e : entries) out << e.token << '\t' << e.class_name << '\t' << e.weight << '\n';
  return out.str();
}

Lexicons default_lexicons() {
  return {
      {"greet", {"hello", "hi"}},
      {"info_question", {"address", "phone"}},
      {"slot_question", {"what", "?"}},
      {"insist", {"sure", "no"}},
      {"cancel", {"no"}},
      {"accept", {"yes", "great"}},
      {"end", {"thank", "thanks"}},
  };
}

ObservationStore::ObservationStore(std::size_t utterance_count,
                                   std::vector<std::string> class_names)
    : utterances_(utterance_count), classes_(std::move(class_names)) {}

std::uint64_t ObservationStore::key(const std::vector<std::size_t>& args) {
  std::uint64_t k = 0;
  for (std::size_t a : args) k = (k << 32) ^ static_cast<std::uint64_t>(a);
  return k;
}

void ObservationStore::declare(const std::string& predicate, std::size_t arity) {
  auto [it, inserted] = tables_.try_emplace(predicate);
  if (inserted) {
    it->second.arity = arity;
  } else if (it->second.arity != arity) {
    throw ConfigError("predicate '" + predicate + "' redeclared with a different arity");
  }
}

void ObservationStore::set_true(const std::string& predicate,
                                const std::vector<std::size_t>& args) {
  auto it = tables_.find(predicate);
  if (it == tables_.end()) throw ConfigError("undeclared predicate '" + predicate + "'");
  if (args.size() != it->second.arity || args.size() > 2) {
    throw ConfigError("arity mismatch for '" + predicate + "'");
  }
  if (it->second.keys.insert(key(args)).second) it->second.atoms.push_back(args);
}

const ObservationStore::Table& ObservationStore::table(const std::string& predicate) const {
  auto it = tables_.find(predicate);
  if (it == tables_.end()) {
    throw ConfigError("predicate '" + predicate + "' has no observations");
  }
  return it->second;
}

bool ObservationStore::truth(const std::string& predicate,
                             const std::vector<std::size_t>& args) const {
  return table(predicate).keys.count(key(args)) != 0;
}

const std::vector<std::vector<std::size_t>>& ObservationStore::true_atoms(
    const std::string& predicate) const {
  return table(predicate).atoms;
}

std::optional<std::size_t> ObservationStore::class_index(const std::string& name) const {
  auto it = std::find(classes_.begin(), classes_.end(), name);
  if (it == classes_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - classes_.begin());
}

ObservationStore build_observations(const DialogCorpus& corpus,
                                    const std::vector<std::string>& class_names,
                                    const Lexicons& lexicons,
                                    const TokenClassTable* token_table) {
  ObservationStore obs(corpus.utterance_count(), class_names);
  obs.declare("FirstUtt", 1);
  obs.declare("LastUtt", 1);
  obs.declare("PrevUtt", 2);
  obs.declare("HasWord", 2);

  std::vector<std::pair<std::string, std::set<std::string>>> lex;
  for (const auto& [key, words] : lexicons) {
    const std::string pred = lexicon_predicate_name(key);
    obs.declare(pred, 1);
    lex.emplace_back(pred, std::set<std::string>(words.begin(), words.end()));
  }

  std::map<std::string, std::vector<std::size_t>> token_classes;
  if (token_table != nullptr) {
    for (const auto& e : token_table->entries) {
      auto c = obs.class_index(e.class_name);
      if (!c) {
        throw ConfigError("token table entry '" + e.token + "' references unknown class '" +
                          e.class_name + "'");
      }
      token_classes[e.token].push_back(*c);
    }
  }

  std::size_t u = 0;
  for (const Dialog& d : corpus.dialogs) {
    if (d.turns.empty()) throw ConfigError("dialog '" + d.id + "' is empty");
    for (std::size_t t = 0; t < d.turns.size(); ++t, ++u) {
      if (t == 0) obs.set_true("FirstUtt", {u});
      if (t + 1 == d.turns.size()) obs.set_true("LastUtt", {u});
      if (t > 0) obs.set_true("PrevUtt", {u, u - 1});
      std::set<std::string> lowered;
      for (const std::string& tok : d.turns[t].tokens) {
        std::string l = tok;
        for (char& c : l) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        lowered.insert(std::move(l));
      }
      for (const auto& [pred, words] : lex) {
        for (const std::string& w : words) {
          if (lowered.count(w)) {
            obs.set_true(pred, {u});
            break;
          }
        }
      }
      for (const std::string& tok : lowered) {
        auto it = token_classes.find(tok);
        if (it == token_classes.end()) continue;
        for (std::size_t c : it->second) obs.set_true("HasWord", {u, c});
      }
    }
  }
  return obs;
}

namespace {

struct VarInfo {
  std::string name;
  ArgType type;
};

class TemplateGrounder {
 public:
  TemplateGrounder(const RuleTemplate& rule, std::size_t index, const ObservationStore& obs,
                   const PredicateSchema& schema, const GroundingOptions& options)
      : rule_(rule), index_(index), obs_(obs), schema_(schema), options_(options) {
    auto collect = [&](const Literal& lit) {
      const PredicateInfo* info = schema_.find(lit.predicate);
      if (info == nullptr) throw ConfigError("unknown predicate '" + lit.predicate + "'");
      if (info->open && (info->args.size() != 2 || info->args[0] != ArgType::kUtterance ||
                         info->args[1] != ArgType::kClass)) {
        throw ConfigError("open predicate '" + lit.predicate + "' must have (utterance, class)");
      }
      for (std::size_t i = 0; i < lit.args.size(); ++i) {
        const Argument& a = lit.args[i];
        if (!a.variable) {
          if (info->args[i] == ArgType::kClass && !obs_.class_index(a.name)) {
            throw ConfigError("unresolved class name '" + a.name + "' in rule " +
                              format_rule(rule_));
          }
          continue;
        }
        if (var_index(a.name) < 0) vars_.push_back({a.name, info->args[i]});
      }
    };
    for (const Literal& lit : rule_.body) collect(lit);
    for (const Literal& lit : rule_.head) collect(lit);
    for (const Literal& lit : rule_.body) {
      const PredicateInfo* info = schema_.find(lit.predicate);
      if (info->open) continue;
      if (!obs_.declared(lit.predicate)) {
        throw ConfigError("rule uses predicate '" + lit.predicate + "' with no observations");
      }
      (lit.negated ? negative_ : positive_).push_back(&lit);
    }
    assignment_.assign(vars_.size(), kUnbound);
  }

  void run(std::vector<GroundRule>& out) {
    out_ = &out;
    start_size_ = out.size();
    bind_positive(0);
  }

 private:
  static constexpr std::size_t kUnbound = static_cast<std::size_t>(-1);

  int var_index(const std::string& name) const {
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      if (vars_[i].name == name) return static_cast<int>(i);
    }
    return -1;
  }

  std::size_t constant_value(const Argument& a, ArgType type) const {
    if (type == ArgType::kClass) return *obs_.class_index(a.name);
    throw ConfigError("utterance constants are not supported ('" + a.name + "')");
  }

  std::vector<std::size_t> resolve(const Literal& lit) const {
    const PredicateInfo* info = schema_.find(lit.predicate);
    std::vector<std::size_t> args;
    for (std::size_t i = 0; i < lit.args.size(); ++i) {
      const Argument& a = lit.args[i];
      args.push_back(a.variable ? assignment_[var_index(a.name)] : constant_value(a, info->args[i]));
    }
    return args;
  }

  void bind_positive(std::size_t level) {
    if (level == positive_.size()) {
      bind_free(0);
      return;
    }
    const Literal& lit = *positive_[level];
    const PredicateInfo* info = schema_.find(lit.predicate);
    for (const auto& atom : obs_.true_atoms(lit.predicate)) {
      std::vector<std::size_t> newly;
      bool ok = true;
      for (std::size_t i = 0; i < lit.args.size() && ok; ++i) {
        const Argument& a = lit.args[i];
        if (!a.variable) {
          ok = constant_value(a, info->args[i]) == atom[i];
          continue;
        }
        const int v = var_index(a.name);
        if (assignment_[v] == kUnbound) {
          assignment_[v] = atom[i];
          newly.push_back(static_cast<std::size_t>(v));
        } else {
          ok = assignment_[v] == atom[i];
        }
      }
      if (ok) bind_positive(level + 1);
      for (std::size_t v : newly) assignment_[v] = kUnbound;
    }
  }

  void bind_free(std::size_t var) {
    if (var == vars_.size()) {
      emit();
      return;
    }
    if (assignment_[var] != kUnbound) {
      bind_free(var + 1);
      return;
    }
    const std::size_t domain = vars_[var].type == ArgType::kUtterance
                                   ? obs_.utterance_count()
                                   : obs_.class_names().size();
    for (std::size_t c = 0; c < domain; ++c) {
      assignment_[var] = c;
      bind_free(var + 1);
    }
    assignment_[var] = kUnbound;
  }

  GroundLiteral make_literal(const Literal& lit) const {
    const PredicateInfo* info = schema_.find(lit.predicate);
    const std::vector<std::size_t> args = resolve(lit);
    GroundLiteral g;
    g.negated = lit.negated;
    if (info->open) {
      g.observed = false;
      g.utterance = args[0];
      g.class_index = args[1];
    } else {
      g.observed = true;
      g.observed_value = obs_.truth(lit.predicate, args) ? 1.0 : 0.0;
    }
    return g;
  }

  void emit() {
    for (const Literal* lit : negative_) {
      if (obs_.truth(lit->predicate, resolve(*lit))) return;
    }
    GroundRule g;
    g.template_index = index_;
    bool has_open = false;
    for (const Literal& lit : rule_.body) {
      g.body.push_back(make_literal(lit));
      has_open = has_open || !g.body.back().observed;
    }
    for (const Literal& lit : rule_.head) {
      g.head.push_back(make_literal(lit));
      has_open = has_open || !g.head.back().observed;
    }
    if (!has_open) return;
    for (std::size_t i = 0; i < vars_.size(); ++i) {
      g.substitution.emplace_back(vars_[i].name, assignment_[i]);
    }
    if (out_->size() - start_size_ >= options_.max_groundings_per_rule) {
      throw GroundingCapError("rule " + std::to_string(index_ + 1) + " (line " +
                              std::to_string(rule_.location.line) + ": " + format_rule(rule_) +
                              ") exceeds the grounding cap of " +
                              std::to_string(options_.max_groundings_per_rule));
    }
    out_->push_back(std::move(g));
  }

  const RuleTemplate& rule_;
  std::size_t index_;
  const ObservationStore& obs_;
  const PredicateSchema& schema_;
  const GroundingOptions& options_;
  std::vector<VarInfo> vars_;
  std::vector<const Literal*> positive_;
  std::vector<const Literal*> negative_;
  std::vector<std::size_t> assignment_;
  std::vector<GroundRule>* out_ = nullptr;
  std::size_t start_size_ = 0;
};

}  // namespace

std::vector<GroundRule> ground(const RuleSet& rules, const ObservationStore& obs,
                               const PredicateSchema& schema, const GroundingOptions& options) {
  std::vector<GroundRule> out;
  for (std::size_t i = 0; i < rules.rules.size(); ++i) {
    const std::size_t begin = out.size();
    TemplateGrounder(rules.rules[i], i, obs, schema, options).run(out);
    std::stable_sort(out.begin() + static_cast<std::ptrdiff_t>(begin), out.end(),
                     [](const GroundRule& a, const GroundRule& b) {
                       for (std::size_t k = 0; k < a.substitution.size(); ++k) {
                         if (a.substitution[k].second != b.substitution[k].second) {
                           return a.substitution[k].second < b.substitution[k].second;
                         }
                       }
                       return false;
                     });
  }
  return out;
}

}  // namespace dsi
