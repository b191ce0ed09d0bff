#include <gtest/gtest.h>

#include "../support/oracles.hpp"
#include "dsiforge/datagen.hpp"
#include "dsiforge/error.hpp"
#include "dsiforge/grounding.hpp"
#include "dsiforge/resources.hpp"
#include "dsiforge/rng.hpp"
#include "dsiforge/softlogic.hpp"

namespace dsi {
namespace {

struct Fixture {
  DialogCorpus corpus;
  std::vector<std::string> classes;
  Lexicons lexicons = default_lexicons();
  PredicateSchema schema;
  RuleSet rules;
  TokenClassTable table;
};

std::string rewrite(std::string text) {
  for (std::size_t p; (p = text.find("init_request")) != std::string::npos;) {
    text.replace(p, 12, "initial_request");
  }
  return text;
}

Fixture fixture(std::size_t dialogs, const std::string& rule_resource) {
  Fixture f;
  GeneratorConfig gen = builtin_multiwoz_like_config();
  gen.seed = 21;
  f.corpus = generate_corpus(gen, dialogs);
  f.classes = gen.graph.states;
  std::vector<std::string> keys;
  for (const auto& [k, v] : f.lexicons) keys.push_back(k);
  f.schema = PredicateSchema::standard(keys);
  f.rules = parse_ruleset(rewrite(read_resource(rule_resource)), f.schema);
  f.table = TokenClassTable::parse(read_resource("builtin:multiwoz_tokens.tsv"));
  return f;
}

std::vector<std::vector<double>> random_decisions(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<std::vector<double>> d(n, std::vector<double>(k));
  for (auto& row : d) {
    double s = 0.0;
    for (double& v : row) s += (v = rng.uniform_open());
    for (double& v : row) v /= s;
  }
  return d;
}

double grounded_penalty(const std::vector<GroundRule>& ground_rules, const RuleSet& rules,
                        const std::vector<std::vector<double>>& dec, const LogicConfig& cfg) {
  Tensor t({dec.size(), dec[0].size()});
  for (std::size_t i = 0; i < dec.size(); ++i) {
    for (std::size_t j = 0; j < dec[i].size(); ++j) t.at(i, j) = dec[i][j];
  }
  std::vector<double> weights;
  for (const auto& r : rules.rules) weights.push_back(r.weight);
  const std::vector<double> truths = evaluate_rule_truths(ground_rules, weights, t, cfg);
  double total = 0.0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    const double w = weights[ground_rules[i].template_index];
    total += cfg.relaxation == Relaxation::kLinear
                 ? w * (1.0 - truths[i])
                 : -w * std::log(std::max(cfg.epsilon_clamp, truths[i]));
  }
  return total;
}

TEST(Grounding, PruningPreservesTotalPenalty) {
  for (const char* res : {"builtin:multiwoz_rules.psl", "builtin:token_rule.psl"}) {
    const Fixture f = fixture(4, res);
    const ObservationStore obs = build_observations(f.corpus, f.classes, f.lexicons, &f.table);
    const auto gr = ground(f.rules, obs, f.schema);
    Rng rng(2);
    for (Logic logic : {Logic::kLukasiewicz, Logic::kProductReal}) {
      for (Relaxation relax : {Relaxation::kLinear, Relaxation::kLog}) {
        LogicConfig cfg;
        cfg.logic = logic;
        cfg.relaxation = relax;
        const auto dec = random_decisions(obs.utterance_count(), f.classes.size(), rng);
        EXPECT_NEAR(grounded_penalty(gr, f.rules, dec, cfg),
                    oracle::brute_force_penalty(f.rules, obs, f.schema, dec, cfg), 1e-9)
            << res;
      }
    }
  }
}

TEST(Grounding, ObservationsFollowDialogLayout) {
  const Fixture f = fixture(3, "builtin:multiwoz_rules.psl");
  const ObservationStore obs = build_observations(f.corpus, f.classes, f.lexicons);
  std::size_t u = 0;
  for (const Dialog& d : f.corpus.dialogs) {
    EXPECT_TRUE(obs.truth("FirstUtt", {u}));
    EXPECT_TRUE(obs.truth("LastUtt", {u + d.turns.size() - 1}));
    for (std::size_t t = 1; t < d.turns.size(); ++t) {
      EXPECT_TRUE(obs.truth("PrevUtt", {u + t, u + t - 1}));
      EXPECT_FALSE(obs.truth("PrevUtt", {u + t - 1, u + t}));
    }
    u += d.turns.size();
  }
  EXPECT_EQ(u, obs.utterance_count());
}

TEST(Grounding, GroundRulesAreDeterministicAndSorted) {
  const Fixture f = fixture(6, "builtin:multiwoz_rules.psl");
  const ObservationStore obs = build_observations(f.corpus, f.classes, f.lexicons);
  const auto a = ground(f.rules, obs, f.schema);
  const auto b = ground(f.rules, obs, f.schema);
  EXPECT_EQ(a, b);
  for (std::size_t i = 1; i < a.size(); ++i) {
    EXPECT_LE(a[i - 1].template_index, a[i].template_index);
  }
}

TEST(Grounding, CapIsEnforced) {
  const Fixture f = fixture(20, "builtin:multiwoz_rules.psl");
  const ObservationStore obs = build_observations(f.corpus, f.classes, f.lexicons);
  GroundingOptions opt;
  opt.max_groundings_per_rule = 3;
  EXPECT_THROW(ground(f.rules, obs, f.schema, opt), GroundingCapError);
}

TEST(Grounding, UnknownClassConstantIsAnError) {
  Fixture f = fixture(2, "builtin:multiwoz_rules.psl");
  f.rules = parse_ruleset("FirstUtt(U) -> State(U, nosuchclass) .", f.schema);
  const ObservationStore obs = build_observations(f.corpus, f.classes, f.lexicons);
  EXPECT_THROW(ground(f.rules, obs, f.schema), ConfigError);
}

TEST(Grounding, TokenTableRoundTripAndValidation) {
  const TokenClassTable t = TokenClassTable::parse(read_resource("builtin:multiwoz_tokens.tsv"));
  EXPECT_EQ(t.entries.size(), 18u);
  EXPECT_EQ(TokenClassTable::parse(t.to_text()).to_text(), t.to_text());
  EXPECT_THROW(TokenClassTable::parse("tok\tclass\n"), ConfigError);
  Fixture f = fixture(2, "builtin:token_rule.psl");
  const TokenClassTable bad = TokenClassTable::parse("hello\tnosuch\t1.0\n");
  EXPECT_THROW(build_observations(f.corpus, f.classes, f.lexicons, &bad), ConfigError);
}

}  // namespace
}  // namespace dsi
