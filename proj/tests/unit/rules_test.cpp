#include <gtest/gtest.h>

#include "dsiforge/error.hpp"
#include "dsiforge/grounding.hpp"
#include "dsiforge/resources.hpp"
#include "dsiforge/rules.hpp"

namespace dsi {
namespace {

PredicateSchema schema() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : default_lexicons()) keys.push_back(k);
  return PredicateSchema::standard(keys);
}

TEST(Rules, ParsesWeightedImplication) {
  const RuleSet rs = parse_ruleset(
      "# comment\n2.5: PrevUtt(A, B) & !State(B, greet) -> State(A, x) | State(A, y) .", schema());
  ASSERT_EQ(rs.rules.size(), 1u);
  const RuleTemplate& r = rs.rules[0];
  EXPECT_EQ(r.weight, 2.5);
  ASSERT_EQ(r.body.size(), 2u);
  EXPECT_TRUE(r.body[1].negated);
  EXPECT_EQ(r.body[1].args[1].name, "greet");
  EXPECT_FALSE(r.body[1].args[1].variable);
  ASSERT_EQ(r.head.size(), 2u);
  EXPECT_EQ(r.location.line, 2);
}

TEST(Rules, WeightDefaultsToOne) {
  const RuleSet rs = parse_ruleset("FirstUtt(U) -> State(U, greet).", schema());
  EXPECT_EQ(rs.rules.at(0).weight, 1.0);
}

TEST(Rules, FormatRoundTrip) {
  const RuleSet rs = parse_ruleset(read_resource("builtin:multiwoz_rules.psl"), schema());
  EXPECT_EQ(rs.rules.size(), 12u);
  EXPECT_EQ(parse_ruleset(format_ruleset(rs), schema()), rs);
}

TEST(Rules, ErrorsCarryPosition) {
  try {
    parse_ruleset("FirstUtt(U) -> State(U, greet) .\nFirstUtt(U) -> State(U greet) .", schema());
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
    EXPECT_GT(e.column(), 1);
  }
}

TEST(Rules, SchemaViolationsAreRejected) {
  EXPECT_THROW(parse_ruleset("Unknown(U) -> State(U, a) .", schema()), ParseError);
  EXPECT_THROW(parse_ruleset("FirstUtt(U, V) -> State(U, a) .", schema()), ParseError);
  EXPECT_THROW(parse_ruleset("FirstUtt(U) -> State(U, a)", schema()), ParseError);
  EXPECT_THROW(parse_ruleset("FirstUtt(C) -> State(U, C) .", schema()), ParseError);
  EXPECT_THROW(parse_ruleset("-1: FirstUtt(U) -> State(U, a) .", schema()), ParseError);
}

TEST(Rules, LexiconPredicateNames) {
  EXPECT_EQ(lexicon_predicate_name("info_question"), "HasInfoQuestionWord");
  EXPECT_EQ(lexicon_predicate_name("greet"), "HasGreetWord");
}

TEST(Rules, TokenRuleParses) {
  const RuleSet rs = parse_ruleset(read_resource("builtin:token_rule.psl"), schema());
  ASSERT_EQ(rs.rules.size(), 1u);
  EXPECT_EQ(rs.rules[0].body[0].predicate, "HasWord");
}

TEST(Rules, UnknownBuiltinResource) {
  EXPECT_THROW(read_resource("builtin:nope.psl"), ConfigError);
}

}  // namespace
}  // namespace dsi
