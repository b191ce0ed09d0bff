#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "dsiforge/corpus.hpp"
#include "dsiforge/rules.hpp"

namespace dsi {

/// Sparse token -> (class, weight) associations, read from
/// "token<TAB>class<TAB>weight" lines. Lines starting with '#' are kept as
/// provenance notes.
struct TokenClassTable {
  struct Entry {
    std::string token;
    std::string class_name;
    double weight = 0.0;
  };
  std::vector<Entry> entries;
  std::string provenance;

  static TokenClassTable parse(const std::string& text);
  static TokenClassTable load(const std::string& path);
  std::string to_text() const;
};

/// Lexicon key (e.g. "greet") -> lowercase tokens.
using Lexicons = std::map<std::string, std::vector<std::string>>;

/// The lexicons used by the dialog-structure rule model.
Lexicons default_lexicons();

/// Ground observed atoms over one corpus. Utterances are numbered globally in
/// dialog order then turn order; classes by their index in `class_names`.
class ObservationStore {
 public:
  ObservationStore(std::size_t utterance_count, std::vector<std::string> class_names);

  void declare(const std::string& predicate, std::size_t arity);
  void set_true(const std::string& predicate, const std::vector<std::size_t>& args);
  /// Closed world: anything not set true is false. Throws for undeclared
  /// predicates.
  bool truth(const std::string& predicate, const std::vector<std::size_t>& args) const;
  const std::vector<std::vector<std::size_t>>& true_atoms(const std::string& predicate) const;
  bool declared(const std::string& predicate) const { return tables_.count(predicate) != 0; }

  std::size_t utterance_count() const { return utterances_; }
  const std::vector<std::string>& class_names() const { return classes_; }
  std::optional<std::size_t> class_index(const std::string& name) const;

 private:
  struct Table {
    std::size_t arity = 0;
    std::vector<std::vector<std::size_t>> atoms;
    std::unordered_set<std::uint64_t> keys;
  };
  static std::uint64_t key(const std::vector<std::size_t>& args);
  const Table& table(const std::string& predicate) const;

  std::size_t utterances_;
  std::vector<std::string> classes_;
  std::map<std::string, Table> tables_;
};

/// FirstUtt, LastUtt, PrevUtt(current, previous), one Has<Key>Word predicate
/// per lexicon, and HasWord(u, c) from the optional token table. Throws
/// ConfigError for an empty dialog or a table entry naming an unknown class.
ObservationStore build_observations(const DialogCorpus& corpus,
                                    const std::vector<std::string>& class_names,
                                    const Lexicons& lexicons,
                                    const TokenClassTable* token_table = nullptr);

struct GroundLiteral {
  bool negated = false;
  bool observed = false;
  double observed_value = 0.0;  // raw atom value in {0,1}, before negation
  std::size_t utterance = 0;    // open literals: row into the decision matrix
  std::size_t class_index = 0;  // open literals: column into the decision matrix

  bool operator==(const GroundLiteral&) const = default;
};

struct GroundRule {
  std::size_t template_index = 0;
  /// Variable -> constant (utterance index or class index), in the order the
  /// variables first appear in the template.
  std::vector<std::pair<std::string, std::size_t>> substitution;
  std::vector<GroundLiteral> body;
  std::vector<GroundLiteral> head;

  bool operator==(const GroundRule&) const = default;
};

struct GroundingOptions {
  std::size_t max_groundings_per_rule = 2'000'000;
};

/// Instantiates every template over the corpus constants. Substitutions whose
/// observed body is false (rule trivially satisfied) are pruned, as are those
/// without any open literal. Output is sorted by template, then substitution.
std::vector<GroundRule> ground(const RuleSet& rules, const ObservationStore& obs,
                               const PredicateSchema& schema,
                               const GroundingOptions& options = {});

}  // namespace dsi
