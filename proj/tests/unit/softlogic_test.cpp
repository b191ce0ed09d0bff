#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <random>

#include "dsiforge/autodiff.hpp"
#include "dsiforge/error.hpp"
#include "dsiforge/softlogic.hpp"

namespace dsi {
namespace {

constexpr std::array kLogics{Logic::kLukasiewicz, Logic::kProductReal};

double op(Connective k, std::initializer_list<double> xs, Logic l) {
  std::vector<double> v(xs);
  return connective(k, v, l);
}

TEST(SoftLogic, CornersMatchClassicalTruthTables) {
  for (Logic l : kLogics) {
    for (int a = 0; a <= 1; ++a) {
      EXPECT_EQ(op(Connective::kNot, {double(a)}, l), double(!a));
      for (int b = 0; b <= 1; ++b) {
        EXPECT_EQ(op(Connective::kAnd, {double(a), double(b)}, l), double(a && b));
        EXPECT_EQ(op(Connective::kOr, {double(a), double(b)}, l), double(a || b));
        for (int c = 0; c <= 1; ++c) {
          EXPECT_EQ(op(Connective::kAnd, {double(a), double(b), double(c)}, l),
                    double(a && b && c));
          EXPECT_EQ(op(Connective::kOr, {double(a), double(b), double(c)}, l),
                    double(a || b || c));
        }
      }
    }
  }
}

TEST(SoftLogic, BoundsAndMonotonicityOnRandomInputs) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Logic l : kLogics) {
    for (int i = 0; i < 10000; ++i) {
      const double a = u(gen), b = u(gen), d = u(gen) * (1.0 - a);
      for (Connective k : {Connective::kAnd, Connective::kOr}) {
        const double v = op(k, {a, b}, l);
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
        ASSERT_GE(op(k, {a + d, b}, l), v - 1e-15);
        ASSERT_NEAR(v, op(k, {b, a}, l), 1e-15);
      }
      ASSERT_LE(op(Connective::kNot, {a + d}, l), op(Connective::kNot, {a}, l));
    }
  }
}

TEST(SoftLogic, LukasiewiczClosedForms) {
  EXPECT_DOUBLE_EQ(op(Connective::kAnd, {0.7, 0.6}, Logic::kLukasiewicz), 0.3);
  EXPECT_DOUBLE_EQ(op(Connective::kAnd, {0.2, 0.6}, Logic::kLukasiewicz), 0.0);
  EXPECT_DOUBLE_EQ(op(Connective::kOr, {0.7, 0.6}, Logic::kLukasiewicz), 1.0);
  EXPECT_DOUBLE_EQ(op(Connective::kOr, {0.2, 0.5}, Logic::kProductReal), 0.6);
}

TEST(SoftLogic, OperandOutsideUnitIntervalThrows) {
  EXPECT_THROW(op(Connective::kAnd, {1.2, 0.5}, Logic::kLukasiewicz), std::domain_error);
  EXPECT_THROW(op(Connective::kNot, {-0.1}, Logic::kProductReal), std::domain_error);
}

TEST(SoftLogic, GraphConnectivesAgreeWithScalars) {
  std::mt19937_64 gen(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (Logic l : kLogics) {
    for (int i = 0; i < 200; ++i) {
      const double a = u(gen), b = u(gen);
      ad::Graph g;
      const Tensor ta = Tensor::scalar(a), tb = Tensor::scalar(b);
      ad::Bindings bind;
      bind.bind("a", ta);
      bind.bind("b", tb);
      std::array<ad::NodeId, 2> xs{g.parameter("a", {}), g.parameter("b", {})};
      auto na = connective(g, Connective::kAnd, xs, l);
      auto no = connective(g, Connective::kOr, xs, l);
      g.forward(bind);
      EXPECT_NEAR(g.value(na).item(), op(Connective::kAnd, {a, b}, l), 1e-15);
      EXPECT_NEAR(g.value(no).item(), op(Connective::kOr, {a, b}, l), 1e-15);
    }
  }
}

TEST(SoftLogic, NormalizedNegationSumsToOne) {
  std::mt19937_64 gen(3);
  for (std::size_t k = 2; k <= 12; ++k) {
    std::vector<double> row(k);
    double s = 0.0;
    for (double& v : row) s += (v = std::exponential_distribution<double>(1.0)(gen));
    for (double& v : row) v /= s;
    double total = 0.0;
    for (std::size_t c = 0; c < k; ++c) total += normalized_negation(row, c);
    EXPECT_NEAR(total, 1.0, 1e-9) << k;
  }
}

TEST(SoftLogic, NormalizedNegationWithTwoClassesIsStandard) {
  for (double p : {0.0, 0.13, 0.5, 0.99, 1.0}) {
    const std::vector<double> row{p, 1.0 - p};
    EXPECT_EQ(normalized_negation(row, 0), 1.0 - p);
  }
  const std::vector<double> one{1.0};
  EXPECT_THROW(normalized_negation(one, 0), std::domain_error);
}

TEST(SoftLogic, PenaltiesAndAggregation) {
  for (Relaxation r : {Relaxation::kLinear, Relaxation::kLog}) {
    for (Aggregation a : {Aggregation::kMean, Aggregation::kSum}) {
      LogicConfig cfg;
      cfg.relaxation = r;
      cfg.aggregation = a;
      ad::Graph g;
      std::vector<RuleTruth> ts{{0, g.scalar(0.5), 2.0}, {1, g.scalar(0.0), 1.0}};
      auto loss = constraint_loss(g, ts, cfg);
      g.forward({});
      const double p0 = r == Relaxation::kLinear ? 2.0 * 0.5 : -2.0 * std::log(0.5);
      const double p1 = r == Relaxation::kLinear ? 1.0 : -std::log(cfg.epsilon_clamp);
      const double expect = a == Aggregation::kSum ? p0 + p1 : (p0 + p1) / 2.0;
      EXPECT_NEAR(g.value(loss).item(), expect, 1e-12);
    }
  }
}

TEST(SoftLogic, SatisfiedRulesCostNothing) {
  for (Relaxation r : {Relaxation::kLinear, Relaxation::kLog}) {
    LogicConfig cfg;
    cfg.relaxation = r;
    ad::Graph g;
    auto loss = constraint_loss(g, {{0, g.scalar(1.0), 3.0}}, cfg);
    g.forward({});
    EXPECT_EQ(g.value(loss).item(), 0.0);
  }
}

TEST(SoftLogic, ConfigValidation) {
  LogicConfig cfg;
  cfg.epsilon_clamp = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  EXPECT_EQ(parse_logic("product-real"), Logic::kProductReal);
  EXPECT_THROW(parse_logic("godel"), ConfigError);
}

}  // namespace
}  // namespace dsi
