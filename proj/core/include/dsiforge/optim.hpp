#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dsiforge/autodiff.hpp"
#include "dsiforge/rng.hpp"
#include "dsiforge/tensor.hpp"

namespace dsi {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Named parameter tensors plus Adam moment accumulators. Iteration order is
/// the lexicographic order of names, which keeps updates deterministic.
class ParameterStore {
 public:
  struct Entry {
    Tensor value;
    Tensor first_moment;
    Tensor second_moment;
  };

  /// Adds a parameter; throws if the name is taken.
  Tensor& add(const std::string& name, Tensor value);
  /// Glorot-uniform initialisation for matrices, zeros for vectors.
  Tensor& add_glorot(const std::string& name, Shape shape, Rng& rng);
  Tensor& add_zeros(const std::string& name, Shape shape);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  const std::map<std::string, Entry>& entries() const { return entries_; }
  Entry& entry(const std::string& name);
  std::vector<std::string> names() const;
  std::uint64_t step_count() const { return steps_; }
  void set_step_count(std::uint64_t s) { steps_ = s; }
  std::size_t parameter_count() const;

  ad::Bindings bindings() const;

  /// Copies parameter values only (no optimizer state).
  std::map<std::string, Tensor> snapshot() const;
  void restore(const std::map<std::string, Tensor>& values);

 private:
  std::map<std::string, Entry> entries_;
  std::uint64_t steps_ = 0;
};

/// One Adam update. Parameters without a gradient entry are left untouched
/// but the step count still advances. Throws NumericError on non-finite
/// gradients, naming the parameter.
void adam_step(ParameterStore& store, const ad::Gradients& grads, const AdamConfig& cfg);

}  // namespace dsi
