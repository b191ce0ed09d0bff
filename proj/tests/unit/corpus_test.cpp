#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dsiforge/corpus.hpp"
#include "dsiforge/datagen.hpp"
#include "dsiforge/error.hpp"
#include "dsiforge/model.hpp"

namespace dsi {
namespace {

DialogCorpus toy() {
  DialogCorpus c;
  Dialog d;
  d.id = "t";
  d.domain = "x";
  d.turns = {{0, {"a", "b"}, "s"}, {1, {"a", "c"}, "s"}};
  c.dialogs.push_back(d);
  return c;
}

TEST(Corpus, JsonlRoundTrip) {
  const DialogCorpus c = generate_corpus(builtin_multiwoz_like_config(), 40);
  const DialogCorpus back = corpus_from_jsonl(corpus_to_jsonl(c));
  EXPECT_EQ(back, c);
  EXPECT_EQ(corpus_hash(back), corpus_hash(c));
}

TEST(Corpus, FileRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "dsiforge_corpus_test.jsonl";
  const DialogCorpus c = generate_corpus(builtin_chain_config(), 5);
  export_corpus(c, path.string());
  EXPECT_EQ(import_corpus(path.string()), c);
  std::filesystem::remove(path);
}

TEST(Corpus, MalformedLineReportsLineNumber) {
  const std::string good = corpus_to_jsonl(toy());
  try {
    corpus_from_jsonl(good + "{not json\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
}

TEST(Corpus, UnlabeledCorpusIsRejectedForEvaluation) {
  DialogCorpus c = toy();
  c.dialogs[0].turns[1].state.reset();
  EXPECT_FALSE(c.has_labels());
  EXPECT_THROW(c.require_labels("evaluation"), ConfigError);
}

TEST(Corpus, VocabularyReservesSpecialIds) {
  const Vocabulary v = Vocabulary::build(toy());
  EXPECT_EQ(v.size(), 7u);
  EXPECT_EQ(v.token(Vocabulary::kPad), "<pad>");
  EXPECT_EQ(v.id("a"), 4u);
  EXPECT_EQ(v.id("zzz"), Vocabulary::kUnk);
  EXPECT_EQ(Vocabulary::from_text(v.to_text()), v);
  EXPECT_EQ(Vocabulary::build(toy(), 5).size(), 5u);
}

TEST(Corpus, TfidfMatchesHandComputation) {
  const DialogCorpus c = toy();
  const Vocabulary v = Vocabulary::build(c);
  const double ra = 2.0 * std::log(2.0), rb = std::log(3.0);
  const double total = ra + 2.0 * rb;
  for (double alpha : {0.0, 0.3, 1.0}) {
    const std::vector<double> w = tfidf_weights(c, v, alpha);
    const double u = (1.0 - alpha) / 7.0;
    EXPECT_NEAR(w[v.id("a")], u + alpha * ra / total, 1e-15);
    EXPECT_NEAR(w[v.id("b")], u + alpha * rb / total, 1e-15);
    EXPECT_NEAR(w[v.id("c")], u + alpha * rb / total, 1e-15);
    EXPECT_NEAR(w[Vocabulary::kEos], u, 1e-15);
  }
}

TEST(Corpus, TfidfSumsToOneAndAlphaZeroIsUniform) {
  const DialogCorpus c = generate_corpus(builtin_multiwoz_like_config(), 200);
  const Vocabulary v = Vocabulary::build(c, 300);
  for (int i = 0; i <= 20; ++i) {
    const double alpha = i / 20.0;
    const std::vector<double> w = tfidf_weights(c, v, alpha);
    double s = 0.0;
    for (double x : w) s += x;
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
  EXPECT_EQ(tfidf_weights(c, v, 0.0), uniform_weights(v.size()));
  EXPECT_THROW(tfidf_weights(c, v, 1.5), ConfigError);
}

TEST(Corpus, SubsetAndStateNames) {
  const DialogCorpus c = generate_corpus(builtin_chain_config(), 30);
  std::size_t total = 0;
  for (Split s : {Split::kTrain, Split::kTest, Split::kValidation}) total += c.subset(s).dialogs.size();
  EXPECT_EQ(total, 30u);
  EXPECT_EQ(c.state_names(), (std::vector<std::string>{"greet", "request", "end"}));
}

}  // namespace
}  // namespace dsi
