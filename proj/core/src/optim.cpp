#include "dsiforge/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "dsiforge/error.hpp"

namespace dsi {

Tensor& ParameterStore::add(const std::string& name, Tensor value) {
  if (entries_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  Entry e;
  e.first_moment = Tensor(value.shape);
  e.second_moment = Tensor(value.shape);
  e.value = std::move(value);
  return entries_.emplace(name, std::move(e)).first->second.value;
}

Tensor& ParameterStore::add_glorot(const std::string& name, Shape shape, Rng& rng) {
  Tensor t(shape);
  if (shape.size() == 2) {
    const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
    for (double& v : t.data) v = rng.uniform(-limit, limit);
  }
  return add(name, std::move(t));
}

Tensor& ParameterStore::add_zeros(const std::string& name, Shape shape) {
  return add(name, Tensor(std::move(shape)));
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second.value;
}

Tensor& ParameterStore::get(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second.value;
}

ParameterStore::Entry& ParameterStore::entry(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  for (const auto& [name, e] : entries_) out.push_back(name);
  return out;
}

std::size_t ParameterStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : entries_) n += e.value.size();
  return n;
}

ad::Bindings ParameterStore::bindings() const {
  ad::Bindings b;
  for (const auto& [name, e] : entries_) b.bind(name, e.value);
  return b;
}

std::map<std::string, Tensor> ParameterStore::snapshot() const {
  std::map<std::string, Tensor> out;
  for (const auto& [name, e] : entries_) out.emplace(name, e.value);
  return out;
}

void ParameterStore::restore(const std::map<std::string, Tensor>& values) {
  for (const auto& [name, t] : values) {
    Tensor& dst = get(name);
    if (dst.shape != t.shape) {
      throw ShapeError("restore: parameter '" + name + "' expected " + to_string(dst.shape) +
                       ", got " + to_string(t.shape));
    }
    dst = t;
  }
}

void adam_step(ParameterStore& store, const ad::Gradients& grads, const AdamConfig& cfg) {
  for (const auto& [name, g] : grads) {
    if (!store.contains(name)) {
      throw std::invalid_argument("gradient for unknown parameter '" + name + "'");
    }
    if (store.get(name).shape != g.shape) {
      throw ShapeError("gradient for '" + name + "' has shape " + to_string(g.shape) +
                       ", parameter has " + to_string(store.get(name).shape));
    }
    for (double v : g.data) {
      if (!std::isfinite(v)) throw NumericError("non-finite gradient for parameter '" + name + "'");
    }
  }
  const std::uint64_t t = store.step_count() + 1;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (const auto& [name, g] : grads) {
    ParameterStore::Entry& e = store.entry(name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double& m = e.first_moment[i];
      double& v = e.second_moment[i];
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * g[i];
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m / bias1;
      const double vhat = v / bias2;
      e.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
  store.set_step_count(t);
}

}  // namespace dsi
