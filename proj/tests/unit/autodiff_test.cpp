#include <gtest/gtest.h>

#include <cmath>

#include "dsiforge/autodiff.hpp"
#include "dsiforge/error.hpp"
#include "dsiforge/gradcheck.hpp"

namespace dsi {
namespace {

using ad::Graph;

TEST(Autodiff, EveryPrimitiveMatchesFiniteDifferences) {
  for (const GradcheckResult& r : run_gradchecks()) {
    EXPECT_TRUE(r.passed()) << r.name << " error " << r.error;
  }
}

TEST(Autodiff, LogRelaxationGradientIdentity) {
  for (double lambda : {0.1, 1.0, 3.5}) {
    EXPECT_LT(log_relaxation_identity_error(lambda), 1e-6) << lambda;
  }
}

TEST(Autodiff, ForwardValues) {
  Graph g;
  auto a = g.constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  auto b = g.constant(Tensor::matrix(2, 2, {5, 6, 7, 8}));
  auto mm = g.matmul(a, b);
  auto sm = g.softmax(a);
  g.forward({});
  EXPECT_EQ(g.value(mm).data, (std::vector<double>{19, 22, 43, 50}));
  const Tensor& s = g.value(sm);
  EXPECT_NEAR(s.at(0, 0) + s.at(0, 1), 1.0, 1e-15);
  EXPECT_NEAR(s.at(0, 1), 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
}

TEST(Autodiff, LogSoftmaxIsStableForLargeLogits) {
  Graph g;
  auto x = g.constant(Tensor::matrix(1, 3, {1000.0, 0.0, -1000.0}));
  auto y = g.log_softmax(x);
  g.forward({});
  EXPECT_NEAR(g.value(y).at(0, 0), 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(g.value(y).at(0, 2)));
}

TEST(Autodiff, KinkSubgradientIsZero) {
  Graph g;
  auto x = g.parameter("x", {2});
  auto y = g.reduce_sum(g.max_scalar(x, 0.5));
  Tensor v = Tensor::vector({0.5, 0.7});
  ad::Bindings b;
  b.bind("x", v);
  g.forward(b);
  const auto grads = g.backward(y);
  EXPECT_EQ(grads.at("x")[0], 0.0);
  EXPECT_EQ(grads.at("x")[1], 1.0);
}

TEST(Autodiff, SharedSubexpressionAccumulatesGradient) {
  Graph g;
  auto x = g.parameter("x", {});
  auto y = g.mul(x, x);
  auto z = g.add(y, y);
  Tensor v = Tensor::scalar(3.0);
  ad::Bindings b;
  b.bind("x", v);
  g.forward(b);
  EXPECT_DOUBLE_EQ(g.backward(z).at("x").item(), 12.0);
}

TEST(Autodiff, ShapeMismatchThrows) {
  Graph g;
  auto a = g.constant(Tensor({2, 3}));
  auto b = g.constant(Tensor({3, 2}));
  EXPECT_THROW(g.add(a, b), ShapeError);
  EXPECT_THROW(g.matmul(a, a), ShapeError);
}

TEST(Autodiff, MissingBindingThrows) {
  Graph g;
  g.parameter("w", {2});
  EXPECT_THROW(g.forward({}), std::invalid_argument);
}

TEST(Autodiff, InputsPrecedeNodes) {
  Graph g;
  auto a = g.constant(Tensor::scalar(1));
  auto b = g.tanh(g.add(a, g.scalar(2)));
  g.concat({a, b}, 0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (ad::NodeId in : g.node(i).inputs) EXPECT_LT(in, i);
  }
}

}  // namespace
}  // namespace dsi
