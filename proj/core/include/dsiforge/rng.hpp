#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dsi {

/// Counter-based splittable generator. The output for draw i depends only on
/// (key, i), so streams derived with split() are independent of how many
/// values the parent has already produced.
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t seed);
  Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in (0, 1), never exactly 0.
  double uniform_open();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::size_t uniform_int(std::size_t n);
  double normal();
  double gumbel();
  /// Index drawn from unnormalized non-negative weights.
  std::size_t categorical(std::span<const double> weights);

  /// Child stream identified by `stream`. Does not advance this generator.
  Rng split(std::uint64_t stream) const;

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace dsi
