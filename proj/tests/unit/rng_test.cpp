#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "dsiforge/rng.hpp"

namespace dsi {
namespace {

TEST(Rng, SameSeedSameStream) {
  Rng a(5), b(5);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SplitStreamsAreIndependentOfParentUse) {
  Rng a(5);
  const Rng child_before = a.split(3);
  a.next_u64();
  Rng c1 = child_before, c2 = Rng(5).split(3);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(c1.next_u64(), c2.next_u64());
  EXPECT_NE(Rng(5).split(3).next_u64(), Rng(5).split(4).next_u64());
}

TEST(Rng, UniformMoments) {
  Rng r(1);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = r.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    s += u;
    s2 += u * u;
  }
  EXPECT_NEAR(s / n, 0.5, 0.005);
  EXPECT_NEAR(s2 / n - (s / n) * (s / n), 1.0 / 12.0, 0.002);
}

TEST(Rng, NormalAndGumbelMoments) {
  Rng r(2);
  double sn = 0.0, sn2 = 0.0, sg = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = r.normal();
    sn += z;
    sn2 += z * z;
    sg += r.gumbel();
  }
  EXPECT_NEAR(sn / n, 0.0, 0.01);
  EXPECT_NEAR(sn2 / n, 1.0, 0.02);
  EXPECT_NEAR(sg / n, 0.5772156649, 0.01);
}

TEST(Rng, CategoricalFrequencies) {
  Rng r(3);
  const std::vector<double> w{0.2, 0.0, 0.5, 0.3};
  std::vector<int> c(4, 0);
  for (int i = 0; i < 100000; ++i) ++c[r.categorical(w)];
  EXPECT_EQ(c[1], 0);
  EXPECT_NEAR(c[2] / 1e5, 0.5, 0.01);
}

TEST(Rng, ShuffleIsPermutation) {
  Rng r(4);
  std::vector<int> v(50);
  for (int i = 0; i < 50; ++i) v[i] = i;
  r.shuffle(v);
  std::vector<int> sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) EXPECT_EQ(sorted[i], i);
}

}  // namespace
}  // namespace dsi
