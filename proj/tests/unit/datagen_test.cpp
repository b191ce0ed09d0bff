#include <gtest/gtest.h>

#include <cmath>
#include <map>

#include "dsiforge/datagen.hpp"
#include "dsiforge/error.hpp"

namespace dsi {
namespace {

TEST(Datagen, TransitionFrequenciesMatchConfiguration) {
  const GeneratorConfig cfg = builtin_multiwoz_like_config();
  const DialogCorpus c = generate_corpus(cfg, 20000);
  const std::size_t k = cfg.graph.size();
  std::vector<std::vector<double>> counts(k, std::vector<double>(k, 0.0));
  std::vector<double> starts(k, 0.0);
  for (const Dialog& d : c.dialogs) {
    starts[cfg.graph.index_of(*d.turns[0].state)] += 1;
    for (std::size_t t = 1; t < d.turns.size(); ++t) {
      counts[cfg.graph.index_of(*d.turns[t - 1].state)][cfg.graph.index_of(*d.turns[t].state)] += 1;
    }
  }
  for (std::size_t i = 0; i < k; ++i) {
    EXPECT_NEAR(starts[i] / 20000.0, cfg.graph.start[i], 0.015);
    if (cfg.graph.terminal[i]) continue;
    double row = 0.0;
    for (double v : counts[i]) row += v;
    ASSERT_GT(row, 500.0) << cfg.graph.states[i];
    for (std::size_t j = 0; j < k; ++j) {
      EXPECT_NEAR(counts[i][j] / row, cfg.graph.transitions[i][j], 0.03)
          << cfg.graph.states[i] << " -> " << cfg.graph.states[j];
    }
  }
}

TEST(Datagen, DialogsEndAtTerminalsOrMaxLength) {
  const GeneratorConfig cfg = builtin_multiwoz_like_config();
  for (const Dialog& d : generate_corpus(cfg, 500).dialogs) {
    ASSERT_FALSE(d.turns.empty());
    ASSERT_LE(d.turns.size(), cfg.max_len);
    const bool terminal = cfg.graph.terminal[cfg.graph.index_of(*d.turns.back().state)];
    EXPECT_TRUE(terminal || d.turns.size() == cfg.max_len);
    for (std::size_t t = 0; t + 1 < d.turns.size(); ++t) {
      EXPECT_FALSE(cfg.graph.terminal[cfg.graph.index_of(*d.turns[t].state)]);
    }
  }
}

TEST(Datagen, SplitsAreEightyTenTen) {
  const DialogCorpus c = generate_corpus(builtin_multiwoz_like_config(), 1000);
  std::map<Split, int> n;
  for (const Dialog& d : c.dialogs) ++n[d.split];
  EXPECT_EQ(n[Split::kTrain], 800);
  EXPECT_EQ(n[Split::kTest], 100);
  EXPECT_EQ(n[Split::kValidation], 100);
}

TEST(Datagen, DeterministicPerSeed) {
  GeneratorConfig cfg = builtin_multiwoz_like_config();
  const DialogCorpus a = generate_corpus(cfg, 200);
  EXPECT_EQ(a, generate_corpus(cfg, 200));
  cfg.seed = 1;
  EXPECT_NE(a, generate_corpus(cfg, 200));
}

TEST(Datagen, ChainCorpusIsDeterministicSequence) {
  const GeneratorConfig cfg = builtin_chain_config();
  for (const Dialog& d : generate_corpus(cfg, 20).dialogs) {
    ASSERT_EQ(d.turns.size(), 3u);
    EXPECT_EQ(*d.turns[0].state, "greet");
    EXPECT_EQ(*d.turns[1].state, "request");
    EXPECT_EQ(*d.turns[2].state, "end");
  }
}

TEST(Datagen, ConfigJsonRoundTrip) {
  const GeneratorConfig cfg = builtin_multiwoz_like_config();
  const GeneratorConfig back = parse_generator_config(generator_config_to_json(cfg));
  EXPECT_EQ(generator_config_to_json(back), generator_config_to_json(cfg));
  EXPECT_EQ(generate_corpus(back, 50), generate_corpus(cfg, 50));
}

TEST(Datagen, ValidationRejectsBrokenGraphs) {
  GeneratorConfig cfg = builtin_chain_config();
  cfg.graph.transitions[0][1] = 0.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = builtin_chain_config();
  std::fill(cfg.graph.terminal.begin(), cfg.graph.terminal.end(), false);
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_THROW(parse_generator_config("{\"states\": 3}"), ConfigError);
}

TEST(Datagen, DotExportHonoursThreshold) {
  const GeneratorConfig cfg = builtin_multiwoz_like_config();
  const std::string all = to_dot(cfg.graph, 0.0);
  const std::string strong = to_dot(cfg.graph, 0.3);
  EXPECT_NE(all.find("digraph"), std::string::npos);
  EXPECT_NE(all.find("0.1"), std::string::npos);
  EXPECT_LT(strong.size(), all.size());
}

}  // namespace
}  // namespace dsi
