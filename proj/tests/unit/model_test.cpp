#include <gtest/gtest.h>

#include <cmath>

#include "dsiforge/datagen.hpp"
#include "dsiforge/error.hpp"
#include "dsiforge/model.hpp"

namespace dsi {
namespace {

struct Tiny {
  DialogCorpus corpus;
  Vocabulary vocab;
  ModelConfig cfg;
  std::vector<double> weights;
};

Tiny tiny(std::size_t dialogs = 6) {
  Tiny t;
  GeneratorConfig gen = builtin_multiwoz_like_config();
  gen.seed = 3;
  t.corpus = generate_corpus(gen, dialogs);
  t.vocab = Vocabulary::build(t.corpus);
  t.cfg.num_states = 4;
  t.cfg.vocab_size = t.vocab.size();
  t.cfg.embed_dim = t.cfg.encoder_dim = t.cfg.dialog_dim = t.cfg.decoder_dim = t.cfg.bow_dim = 6;
  t.weights = tfidf_weights(t.corpus, t.vocab, 0.5);
  return t;
}

std::vector<const Dialog*> ptrs(const DialogCorpus& c) {
  std::vector<const Dialog*> out;
  for (const Dialog& d : c.dialogs) out.push_back(&d);
  return out;
}

TEST(Model, StepKlMatchesDefinition) {
  EXPECT_NEAR(step_kl({0.5, 0.5}, {0.25, 0.75}),
              0.5 * std::log(2.0) + 0.5 * std::log(0.5 / 0.75), 1e-15);
  EXPECT_EQ(step_kl({1.0, 0.0}, {1.0, 0.0}), 0.0);
  EXPECT_NEAR(step_kl({1.0, 0.0}, {0.0, 1.0}), -std::log(1e-10), 1e-9);
}

TEST(Model, TotalIsSumOfComponents) {
  Tiny t = tiny();
  Rng init(1);
  DdVrnn model(t.cfg, init);
  const LossBreakdown b = batch_loss(model, make_batch(ptrs(t.corpus), t.vocab, t.cfg), t.weights,
                                     nullptr, nullptr);
  EXPECT_TRUE(b.finite());
  EXPECT_GE(b.kl, 0.0);
  EXPECT_GT(b.reconstruction, 0.0);
  EXPECT_NEAR(b.total,
              b.reconstruction + b.kl + t.cfg.lambda_bow * b.bow + b.ce + b.constraint, 1e-9);
}

TEST(Model, DistributionsAreNormalised) {
  Tiny t = tiny();
  Rng init(2);
  DdVrnn model(t.cfg, init);
  auto sum = [](const Tensor& x) {
    double s = 0.0;
    for (double v : x.data) s += v;
    return s;
  };
  const Tensor p0 = model.prior_step(std::nullopt);
  EXPECT_NEAR(sum(p0), 1.0, 1e-12);
  EXPECT_NEAR(sum(model.prior_step(p0)), 1.0, 1e-12);
  const Tensor enc = model.encode_utterance(t.vocab.encode(t.corpus.dialogs[0].turns[0].tokens));
  EXPECT_NEAR(sum(model.posterior_step(enc, Tensor({t.cfg.dialog_dim}))), 1.0, 1e-12);
}

TEST(Model, InferenceIsIndependentOfBatchCompanions) {
  Tiny t = tiny(5);
  Rng init(3);
  DdVrnn model(t.cfg, init);
  const Dialog& d = t.corpus.dialogs[2];
  const Inference alone = model.infer(make_batch({&d}, t.vocab, t.cfg));
  const Inference mixed = model.infer(make_batch(ptrs(t.corpus), t.vocab, t.cfg));
  std::size_t offset = t.corpus.dialogs[0].turns.size() + t.corpus.dialogs[1].turns.size();
  for (std::size_t r = 0; r < d.turns.size(); ++r) {
    for (std::size_t k = 0; k < t.cfg.num_states; ++k) {
      EXPECT_NEAR(alone.posterior.at(r, k), mixed.posterior.at(offset + r, k), 1e-12);
    }
  }
}

TEST(Model, BatchLayoutAndLabels) {
  Tiny t = tiny(3);
  std::vector<int> labels(t.corpus.utterance_count(), -1);
  labels[1] = 2;
  const DialogBatch b = make_batch(ptrs(t.corpus), t.vocab, t.cfg, &labels);
  EXPECT_EQ(b.batch_size, 3u);
  EXPECT_EQ(b.utterance_count(), t.corpus.utterance_count());
  EXPECT_EQ(b.labels[1], 2);
  std::vector<int> bad(2, -1);
  EXPECT_THROW(make_batch(ptrs(t.corpus), t.vocab, t.cfg, &bad), ConfigError);
  bad.assign(t.corpus.utterance_count(), 9);
  EXPECT_THROW(make_batch(ptrs(t.corpus), t.vocab, t.cfg, &bad), ConfigError);
}

TEST(Model, LabelsAddCrossEntropy) {
  Tiny t = tiny();
  Rng init(4);
  DdVrnn model(t.cfg, init);
  std::vector<int> labels(t.corpus.utterance_count(), -1);
  labels[0] = 1;
  const auto p = ptrs(t.corpus);
  const LossBreakdown plain =
      batch_loss(model, make_batch(p, t.vocab, t.cfg), t.weights, nullptr, nullptr);
  const LossBreakdown sup =
      batch_loss(model, make_batch(p, t.vocab, t.cfg, &labels), t.weights, nullptr, nullptr);
  EXPECT_EQ(plain.ce, 0.0);
  EXPECT_GT(sup.ce, 0.0);
  EXPECT_NEAR(sup.reconstruction, plain.reconstruction, 1e-12);
}

TEST(Model, GumbelRequiresRngAndIsSeeded) {
  Tiny t = tiny();
  t.cfg.gumbel_tau = 0.5;
  Rng init(5);
  DdVrnn model(t.cfg, init);
  const DialogBatch b = make_batch(ptrs(t.corpus), t.vocab, t.cfg);
  EXPECT_THROW(batch_loss(model, b, t.weights, nullptr, nullptr), ConfigError);
  Rng g1(9), g2(9);
  EXPECT_EQ(batch_loss(model, b, t.weights, nullptr, &g1).total,
            batch_loss(model, b, t.weights, nullptr, &g2).total);
}

TEST(Model, ConfigValidation) {
  ModelConfig c;
  EXPECT_THROW(c.validate(), ConfigError);
  c.vocab_size = 10;
  EXPECT_NO_THROW(c.validate());
  c.num_states = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(parse_bow_weighting("idf"), ConfigError);
}

}  // namespace
}  // namespace dsi
