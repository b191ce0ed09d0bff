#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "dsiforge/error.hpp"
#include "dsiforge/optim.hpp"

namespace dsi {
namespace {

TEST(Optim, FirstAdamStepMovesByLearningRate) {
  ParameterStore s;
  s.add("x", Tensor::vector({1.0, -2.0}));
  ad::Gradients g{{"x", Tensor::vector({0.3, -5.0})}};
  AdamConfig cfg;
  adam_step(s, g, cfg);
  EXPECT_NEAR(s.get("x")[0], 1.0 - 1e-3, 1e-10);
  EXPECT_NEAR(s.get("x")[1], -2.0 + 1e-3, 1e-10);
  EXPECT_EQ(s.step_count(), 1u);
}

TEST(Optim, AdamMinimisesQuadratic) {
  ParameterStore s;
  s.add("x", Tensor::vector({3.0, -4.0}));
  AdamConfig cfg;
  cfg.lr = 0.05;
  for (int i = 0; i < 2000; ++i) {
    Tensor grad = s.get("x");
    for (double& v : grad.data) v *= 2.0;
    adam_step(s, {{"x", grad}}, cfg);
  }
  EXPECT_NEAR(s.get("x")[0], 0.0, 1e-3);
  EXPECT_NEAR(s.get("x")[1], 0.0, 1e-3);
}

TEST(Optim, NonFiniteGradientNamesParameter) {
  ParameterStore s;
  s.add("weights", Tensor::vector({1.0}));
  ad::Gradients g{{"weights", Tensor::vector({std::numeric_limits<double>::quiet_NaN()})}};
  try {
    adam_step(s, g, {});
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("weights"), std::string::npos);
  }
}

TEST(Optim, SnapshotRestore) {
  ParameterStore s;
  Rng rng(1);
  s.add_glorot("w", {3, 4}, rng);
  s.add_zeros("b", {4});
  const auto snap = s.snapshot();
  s.get("w")[0] = 100.0;
  s.restore(snap);
  EXPECT_EQ(s.snapshot(), snap);
  EXPECT_EQ(s.parameter_count(), 16u);
  EXPECT_THROW(s.add_zeros("b", {4}), std::exception);
  auto bad = snap;
  bad["w"] = Tensor({2, 2});
  EXPECT_THROW(s.restore(bad), ShapeError);
}

TEST(Optim, GlorotBounds) {
  ParameterStore s;
  Rng rng(2);
  const Tensor& w = s.add_glorot("w", {10, 30}, rng);
  const double limit = std::sqrt(6.0 / 40.0);
  for (double v : w.data) EXPECT_LE(std::abs(v), limit);
}

}  // namespace
}  // namespace dsi
