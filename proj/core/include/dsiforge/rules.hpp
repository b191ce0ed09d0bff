#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace dsi {

enum class ArgType { kUtterance, kClass };

struct PredicateInfo {
  std::string name;
  std::vector<ArgType> args;
  /// Open predicates are decision variables supplied by the model (State);
  /// closed ones are observed from the corpus.
  bool open = false;
};

/// Maps a lexicon key such as "info_question" to its predicate name
/// ("HasInfoQuestionWord").
std::string lexicon_predicate_name(std::string_view lexicon_key);

class PredicateSchema {
 public:
  void add(PredicateInfo info);
  const PredicateInfo* find(std::string_view name) const;
  const std::map<std::string, PredicateInfo, std::less<>>& predicates() const { return preds_; }

  /// State/2 (open), FirstUtt/1, LastUtt/1, PrevUtt/2, HasWord/2 and one
  /// Has<Key>Word/1 predicate per lexicon key.
  static PredicateSchema standard(const std::vector<std::string>& lexicon_keys);

 private:
  std::map<std::string, PredicateInfo, std::less<>> preds_;
};

struct Argument {
  bool variable = false;  // uppercase-initial identifiers are variables
  std::string name;

  bool operator==(const Argument&) const = default;
};

struct Literal {
  bool negated = false;
  std::string predicate;
  std::vector<Argument> args;

  bool operator==(const Literal&) const = default;
};

struct SourceLocation {
  int line = 0;
  int column = 0;
};

/// Weighted implication: conjunction of body literals -> disjunction of head
/// literals.
struct RuleTemplate {
  double weight = 1.0;
  std::vector<Literal> body;
  std::vector<Literal> head;
  SourceLocation location;

  /// Structural equality; the source location is ignored.
  bool operator==(const RuleTemplate& o) const {
    return weight == o.weight && body == o.body && head == o.head;
  }
};

struct RuleSet {
  std::vector<RuleTemplate> rules;
  bool operator==(const RuleSet&) const = default;
};

/// Parses the rule language:
///
///   ruleset  := { rule }
///   rule     := [ WEIGHT ":" ] body "->" head "."
///   body     := literal { "&" literal }
///   head     := literal { "|" literal }
///   literal  := [ "!" ] IDENT "(" arg { "," arg } ")"
///   arg      := VARIABLE | CONSTANT
///
/// A missing weight defaults to 1.0. "#" starts a comment. Predicates are
/// checked against `schema` (name, arity, argument kinds); throws ParseError.
RuleSet parse_ruleset(std::string_view text, const PredicateSchema& schema);

std::string format_literal(const Literal& lit);
std::string format_rule(const RuleTemplate& rule);
/// One rule per line; parse_ruleset(format_ruleset(r)) == r.
std::string format_ruleset(const RuleSet& rules);

}  // namespace dsi
