#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../support/oracles.hpp"
#include "dsiforge/error.hpp"
#include "dsiforge/metrics.hpp"
#include "dsiforge/rng.hpp"

namespace dsi {
namespace {

TEST(Metrics, ExpectedMutualInformationMatchesPermutationOracle) {
  for (std::size_t n = 1; n <= 5; ++n) {
    oracle::for_each_labeling(n, 3, [&](const Labels& pred) {
      oracle::for_each_labeling(n, 3, [&](const Labels& gold) {
        const auto table = ContingencyTable::build(pred, gold);
        ASSERT_NEAR(expected_mutual_information(table), oracle::permutation_emi(pred, gold), 1e-9);
        ASSERT_NEAR(mutual_information(table), oracle::plain_mi(pred, gold), 1e-12);
      });
    });
  }
}

TEST(Metrics, AmiMatchesOracleOnSixPoints) {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<std::size_t> d(0, 2);
  for (int trial = 0; trial < 60; ++trial) {
    Labels a(6), b(6);
    for (auto& x : a) x = d(gen);
    for (auto& x : b) x = d(gen);
    EXPECT_NEAR(ami(a, b), oracle::permutation_ami(a, b), 1e-9);
  }
}

TEST(Metrics, AmiOfIdenticalLabelingsIsOne) {
  const Labels u{0, 0, 1, 1, 2, 2, 2, 3};
  EXPECT_NEAR(ami(u, u), 1.0, 1e-12);
  const Labels relabel{5, 5, 4, 4, 0, 0, 0, 9};
  EXPECT_NEAR(ami(relabel, u), 1.0, 1e-12);
}

TEST(Metrics, AmiOfRandomLabelingsIsNearZero) {
  Rng rng(3);
  double sum = 0.0;
  const int trials = 200;
  for (int t = 0; t < trials; ++t) {
    Labels a(300), b(300);
    for (auto& x : a) x = rng.uniform_int(6);
    for (auto& x : b) x = rng.uniform_int(6);
    sum += ami(a, b);
  }
  EXPECT_LT(std::abs(sum / trials), 0.02);
}

TEST(Metrics, AmiDegenerateDenominatorIsZero) {
  EXPECT_EQ(ami(Labels{0, 0, 0}, Labels{1, 1, 1}), 0.0);
}

TEST(Metrics, PurityAndEntropy) {
  const Labels pred{0, 0, 0, 1, 1, 2};
  const Labels gold{0, 0, 1, 1, 1, 0};
  EXPECT_DOUBLE_EQ(purity(pred, gold), (2.0 + 2.0 + 1.0) / 6.0);
  EXPECT_NEAR(entropy({3, 3}, 6), std::log(2.0), 1e-15);
  EXPECT_THROW(purity(Labels{0}, Labels{0, 1}), std::invalid_argument);
}

TEST(Metrics, ClassBalancedAccuracyIsMeanRecall) {
  const Labels gold{0, 0, 0, 0, 1, 1};
  const Labels pred{0, 0, 0, 1, 1, 0};
  EXPECT_DOUBLE_EQ(class_balanced_accuracy(pred, gold), 0.5 * (0.75 + 0.5));
}

TEST(Metrics, ClassBalancedAccuracyOfRandomGuessIsChance) {
  Rng rng(8);
  Labels gold(20000), pred(20000);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    gold[i] = rng.uniform() < 0.8 ? 0 : 1 + rng.uniform_int(3);
    pred[i] = rng.uniform_int(4);
  }
  EXPECT_NEAR(class_balanced_accuracy(pred, gold), 0.25, 0.02);
}

Tensor blobs(const Labels& y, std::size_t d, double spread, Rng& rng) {
  Tensor x({y.size(), d});
  for (std::size_t i = 0; i < y.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      x.at(i, j) = (j == y[i] ? 3.0 : 0.0) + spread * rng.normal();
    }
  }
  return x;
}

TEST(Metrics, ProbeSeparatesGaussianBlobs) {
  Rng rng(4);
  Labels ytr(300), yte(300);
  for (auto& v : ytr) v = rng.uniform_int(3);
  for (auto& v : yte) v = rng.uniform_int(3);
  const Tensor xtr = blobs(ytr, 4, 0.5, rng), xte = blobs(yte, 4, 0.5, rng);
  EXPECT_GT(linear_probe(xtr, ytr, xte, yte, 0, 1), 0.97);
  EXPECT_GT(linear_probe(xtr, ytr, xte, yte, 5, 1), 0.85);
}

TEST(Metrics, ProbeOnNoiseIsChance) {
  Rng rng(6);
  Labels ytr(600), yte(3000);
  for (auto& v : ytr) v = rng.uniform_int(4);
  for (auto& v : yte) v = rng.uniform_int(4);
  Tensor xtr({600, 3}), xte({3000, 3});
  for (double& v : xtr.data) v = rng.normal();
  for (double& v : xte.data) v = rng.normal();
  EXPECT_NEAR(linear_probe(xtr, ytr, xte, yte, 0, 2), 0.25, 0.05);
}

TEST(Metrics, ProbeIsDeterministicInSeed) {
  Rng rng(7);
  Labels y(100);
  for (auto& v : y) v = rng.uniform_int(3);
  const Tensor x = blobs(y, 3, 2.0, rng);
  EXPECT_EQ(linear_probe(x, y, x, y, 2, 11), linear_probe(x, y, x, y, 2, 11));
}

TEST(Metrics, ProbeRejectsUnseenTestClass) {
  Tensor x({4, 1}, 1.0);
  EXPECT_THROW(linear_probe(x, Labels{0, 0, 1, 1}, x, Labels{0, 1, 2, 2}, 0, 0), ConfigError);
}

TEST(Metrics, InducedStructureIsStochasticAndMarksTerminals) {
  const std::vector<Labels> seqs{{0, 1, 2}, {0, 1, 1, 2}, {1, 2}};
  const StructureGraph g = induce_structure(seqs, 4, {"a", "b", "c", "d"});
  EXPECT_DOUBLE_EQ(g.start[0], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(g.transitions[1][2], 3.0 / 4.0);
  EXPECT_DOUBLE_EQ(g.transitions[2][2], 1.0);
  EXPECT_TRUE(g.terminal[2]);
  EXPECT_TRUE(g.terminal[3]);
  EXPECT_FALSE(g.terminal[0]);
  EXPECT_NO_THROW(g.validate());
}

TEST(Metrics, StateUsageEntropy) {
  EXPECT_NEAR(state_usage_entropy(Tensor::matrix(2, 2, {1, 0, 0, 1})), std::log(2.0), 1e-15);
  EXPECT_EQ(state_usage_entropy(Tensor::matrix(2, 2, {1, 0, 1, 0})), 0.0);
}

TEST(Metrics, ReportRoundTrip) {
  MetricsReport r;
  r.ami = 0.25;
  r.few_shot = {{1, 0.5}, {5, 0.75}};
  r.config_hash = "abc";
  r.seed = 9;
  const MetricsReport back = MetricsReport::from_json(r.to_json());
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_TRUE(back.all_finite());
}

}  // namespace
}  // namespace dsi
