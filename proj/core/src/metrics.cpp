#include "dsiforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "dsiforge/error.hpp"
#include "dsiforge/rng.hpp"

namespace dsi {

Labels encode_labels(const std::vector<std::string>& names, std::vector<std::string>* vocabulary) {
  std::unordered_map<std::string, std::size_t> ids;
  std::vector<std::string> order;
  Labels out;
  out.reserve(names.size());
  for (const std::string& s : names) {
    auto [it, inserted] = ids.emplace(s, order.size());
    if (inserted) order.push_back(s);
    out.push_back(it->second);
  }
  if (vocabulary != nullptr) *vocabulary = std::move(order);
  return out;
}

namespace {

Labels compact(const Labels& labels, std::size_t& count) {
  std::unordered_map<std::size_t, std::size_t> ids;
  Labels out;
  out.reserve(labels.size());
  for (std::size_t v : labels) {
    auto [it, inserted] = ids.emplace(v, ids.size());
    out.push_back(it->second);
  }
  count = ids.size();
  return out;
}

void check_pair(const Labels& a, const Labels& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("label sequences differ in length (" + std::to_string(a.size()) +
                                " vs " + std::to_string(b.size()) + ")");
  }
  if (a.empty()) throw std::invalid_argument("label sequences are empty");
}

}  // namespace

ContingencyTable ContingencyTable::build(const Labels& pred, const Labels& gold) {
  check_pair(pred, gold);
  std::size_t rows = 0, cols = 0;
  const Labels p = compact(pred, rows);
  const Labels g = compact(gold, cols);
  ContingencyTable t;
  t.counts.assign(rows, std::vector<std::size_t>(cols, 0));
  t.row_sums.assign(rows, 0);
  t.col_sums.assign(cols, 0);
  t.total = pred.size();
  for (std::size_t i = 0; i < p.size(); ++i) {
    ++t.counts[p[i]][g[i]];
    ++t.row_sums[p[i]];
    ++t.col_sums[g[i]];
  }
  return t;
}

double entropy(const std::vector<std::size_t>& marginal, std::size_t total) {
  const double n = static_cast<double>(total);
  double h = 0.0;
  for (std::size_t c : marginal) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log(p);
  }
  return h;
}

double mutual_information(const ContingencyTable& t) {
  const double n = static_cast<double>(t.total);
  double mi = 0.0;
  for (std::size_t i = 0; i < t.counts.size(); ++i) {
    for (std::size_t j = 0; j < t.counts[i].size(); ++j) {
      const std::size_t nij = t.counts[i][j];
      if (nij == 0) continue;
      const double v = static_cast<double>(nij);
      mi += v / n *
            std::log(n * v / (static_cast<double>(t.row_sums[i]) * static_cast<double>(t.col_sums[j])));
    }
  }
  return mi;
}

double expected_mutual_information(const ContingencyTable& t) {
  const std::size_t n = t.total;
  const double nd = static_cast<double>(n);
  auto lf = [](std::size_t x) { return std::lgamma(static_cast<double>(x) + 1.0); };
  const double log_n_fact = lf(n);
  double emi = 0.0;
  for (std::size_t a : t.row_sums) {
    for (std::size_t b : t.col_sums) {
      const std::size_t lo = std::max<std::size_t>(1, a + b > n ? a + b - n : 0);
      const std::size_t hi = std::min(a, b);
      const double fixed = lf(a) + lf(b) + lf(n - a) + lf(n - b) - log_n_fact;
      for (std::size_t k = lo; k <= hi; ++k) {
        const double kd = static_cast<double>(k);
        const double log_p =
            fixed - lf(k) - lf(a - k) - lf(b - k) - lf(n - a - b + k);
        const double term =
            kd / nd * std::log(nd * kd / (static_cast<double>(a) * static_cast<double>(b)));
        emi += term * std::exp(log_p);
      }
    }
  }
  return emi;
}

double ami(const Labels& pred, const Labels& gold) {
  const ContingencyTable t = ContingencyTable::build(pred, gold);
  const double mi = mutual_information(t);
  const double emi = expected_mutual_information(t);
  const double avg = 0.5 * (entropy(t.row_sums, t.total) + entropy(t.col_sums, t.total));
  const double denom = avg - emi;
  if (std::abs(denom) < 1e-15) return 0.0;
  return (mi - emi) / denom;
}

double purity(const Labels& pred, const Labels& gold) {
  const ContingencyTable t = ContingencyTable::build(pred, gold);
  std::size_t sum = 0;
  for (const auto& row : t.counts) sum += *std::max_element(row.begin(), row.end());
  return static_cast<double>(sum) / static_cast<double>(t.total);
}

double class_balanced_accuracy(const Labels& pred, const Labels& gold) {
  check_pair(pred, gold);
  std::unordered_map<std::size_t, std::pair<std::size_t, std::size_t>> per_class;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    auto& [hit, count] = per_class[gold[i]];
    ++count;
    if (pred[i] == gold[i]) ++hit;
  }
  double sum = 0.0;
  for (const auto& [cls, hc] : per_class) {
    sum += static_cast<double>(hc.first) / static_cast<double>(hc.second);
  }
  return sum / static_cast<double>(per_class.size());
}

void LogisticProbe::fit(const Tensor& x, const Labels& y, std::size_t num_classes,
                        const ProbeOptions& opts) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (n == 0 || n != y.size()) throw std::invalid_argument("probe: features and labels differ");
  dim_ = d;
  classes_ = num_classes;
  mean_.assign(d, 0.0);
  scale_.assign(d, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) mean_[c] += x.at(r, c);
  }
  for (double& m : mean_) m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) {
      const double v = x.at(r, c) - mean_[c];
      scale_[c] += v * v;
    }
  }
  for (double& s : scale_) {
    s = std::sqrt(s / static_cast<double>(n));
    if (s < 1e-12) s = 1.0;
  }
  std::vector<double> xs(n * (d + 1));
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) xs[r * (d + 1) + c] = (x.at(r, c) - mean_[c]) / scale_[c];
    xs[r * (d + 1) + d] = 1.0;
  }
  const std::size_t cols = num_classes;
  weights_.assign((d + 1) * cols, 0.0);
  std::vector<double> prob(n * cols), grad((d + 1) * cols);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t it = 0; it < opts.iterations; ++it) {
    for (std::size_t r = 0; r < n; ++r) {
      double* p = prob.data() + r * cols;
      std::fill_n(p, cols, 0.0);
      const double* xr = xs.data() + r * (d + 1);
      for (std::size_t f = 0; f <= d; ++f) {
        const double* w = weights_.data() + f * cols;
        for (std::size_t k = 0; k < cols; ++k) p[k] += xr[f] * w[k];
      }
      const double mx = *std::max_element(p, p + cols);
      double z = 0.0;
      for (std::size_t k = 0; k < cols; ++k) z += (p[k] = std::exp(p[k] - mx));
      for (std::size_t k = 0; k < cols; ++k) p[k] /= z;
      p[y[r]] -= 1.0;
    }
    std::fill(grad.begin(), grad.end(), 0.0);
    for (std::size_t r = 0; r < n; ++r) {
      const double* p = prob.data() + r * cols;
      const double* xr = xs.data() + r * (d + 1);
      for (std::size_t f = 0; f <= d; ++f) {
        double* gr = grad.data() + f * cols;
        for (std::size_t k = 0; k < cols; ++k) gr[k] += xr[f] * p[k];
      }
    }
    for (std::size_t f = 0; f <= d; ++f) {
      for (std::size_t k = 0; k < cols; ++k) {
        double& w = weights_[f * cols + k];
        double g = grad[f * cols + k] * inv_n;
        if (f < d) g += opts.l2 * w;
        w -= opts.learning_rate * g;
      }
    }
  }
}

Labels LogisticProbe::predict(const Tensor& x) const {
  if (x.cols() != dim_) throw std::invalid_argument("probe: feature dimension mismatch");
  Labels out(x.rows());
  std::vector<double> logits(classes_);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (std::size_t k = 0; k < classes_; ++k) logits[k] = weights_[dim_ * classes_ + k];
    for (std::size_t f = 0; f < dim_; ++f) {
      const double v = (x.at(r, f) - mean_[f]) / scale_[f];
      for (std::size_t k = 0; k < classes_; ++k) logits[k] += v * weights_[f * classes_ + k];
    }
    out[r] = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) -
                                      logits.begin());
  }
  return out;
}

double linear_probe(const Tensor& train_x, const Labels& train_y, const Tensor& test_x,
                    const Labels& test_y, std::size_t shots, std::uint64_t seed,
                    const ProbeOptions& opts) {
  if (train_x.rows() != train_y.size() || test_x.rows() != test_y.size()) {
    throw std::invalid_argument("probe: feature rows and labels differ");
  }
  if (test_y.empty()) throw std::invalid_argument("probe: empty held-out set");
  std::size_t classes = 0;
  for (std::size_t v : train_y) classes = std::max(classes, v + 1);
  for (std::size_t v : test_y) classes = std::max(classes, v + 1);
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t r = 0; r < train_y.size(); ++r) by_class[train_y[r]].push_back(r);

  std::vector<std::size_t> rows;
  if (shots == 0) {
    for (std::size_t v : test_y) {
      if (by_class[v].empty()) {
        throw ConfigError("probe: class " + std::to_string(v) + " has no training examples");
      }
    }
    rows.resize(train_y.size());
    for (std::size_t r = 0; r < rows.size(); ++r) rows[r] = r;
  } else {
    Rng rng(seed);
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<std::size_t> pool = by_class[c];
      Rng class_rng = rng.split(c);
      class_rng.shuffle(pool);
      pool.resize(std::min(shots, pool.size()));
      std::sort(pool.begin(), pool.end());
      rows.insert(rows.end(), pool.begin(), pool.end());
    }
  }
  if (rows.empty()) throw ConfigError("probe: no training examples selected");
  Tensor x({rows.size(), train_x.cols()});
  Labels y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::copy_n(train_x.data.begin() + rows[i] * train_x.cols(), train_x.cols(),
                x.data.begin() + i * train_x.cols());
    y[i] = train_y[rows[i]];
  }
  LogisticProbe probe;
  probe.fit(x, y, classes, opts);
  return class_balanced_accuracy(probe.predict(test_x), test_y);
}

StructureGraph induce_structure(const std::vector<Labels>& sequences, std::size_t num_states,
                                const std::vector<std::string>& names) {
  if (num_states == 0) throw std::invalid_argument("induce_structure: no states");
  if (!names.empty() && names.size() != num_states) {
    throw std::invalid_argument("induce_structure: name count differs from state count");
  }
  StructureGraph g;
  for (std::size_t i = 0; i < num_states; ++i) {
    g.states.push_back(names.empty() ? "s" + std::to_string(i) : names[i]);
  }
  std::vector<double> start(num_states, 0.0);
  std::vector<std::vector<double>> counts(num_states, std::vector<double>(num_states, 0.0));
  g.terminal.assign(num_states, false);
  double n_seq = 0.0;
  for (const Labels& seq : sequences) {
    if (seq.empty()) continue;
    for (std::size_t s : seq) {
      if (s >= num_states) throw std::invalid_argument("induce_structure: state out of range");
    }
    start[seq.front()] += 1.0;
    n_seq += 1.0;
    for (std::size_t t = 1; t < seq.size(); ++t) counts[seq[t - 1]][seq[t]] += 1.0;
    g.terminal[seq.back()] = true;
  }
  if (n_seq == 0.0) throw std::invalid_argument("induce_structure: no nonempty sequences");
  for (double& p : start) p /= n_seq;
  g.start = start;
  g.transitions.resize(num_states);
  for (std::size_t i = 0; i < num_states; ++i) {
    double row = 0.0;
    for (double c : counts[i]) row += c;
    g.transitions[i].assign(num_states, 0.0);
    if (row == 0.0) {
      g.transitions[i][i] = 1.0;
      g.terminal[i] = true;
    } else {
      for (std::size_t j = 0; j < num_states; ++j) g.transitions[i][j] = counts[i][j] / row;
    }
  }
  return g;
}

double state_usage_entropy(const Tensor& posterior) {
  const std::size_t n = posterior.rows();
  const std::size_t k = posterior.cols();
  if (n == 0) return 0.0;
  std::vector<double> mean(k, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < k; ++c) mean[c] += posterior.at(r, c);
  }
  double h = 0.0;
  for (double m : mean) {
    const double p = m / static_cast<double>(n);
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

std::string MetricsReport::to_json() const {
  nlohmann::ordered_json j;
  j["ami"] = ami;
  j["purity"] = purity;
  j["class_balanced_accuracy"] = class_balanced_accuracy;
  j["probe_act_full"] = probe_act_full;
  j["probe_domain_full"] = probe_domain_full;
  nlohmann::ordered_json fs = nlohmann::ordered_json::object();
  for (const auto& [shots, acc] : few_shot) fs[std::to_string(shots)] = acc;
  j["few_shot"] = fs;
  j["few_shot_mean"] = few_shot_mean;
  j["constraint_mean_truth"] = constraint_mean_truth;
  j["ground_rules"] = ground_rules;
  j["state_usage_entropy"] = state_usage_entropy;
  j["utterances"] = utterances;
  j["seed"] = seed;
  j["config_hash"] = config_hash;
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  MetricsReport r;
  try {
    const auto j = nlohmann::json::parse(text);
    r.ami = j.at("ami").get<double>();
    r.purity = j.at("purity").get<double>();
    r.class_balanced_accuracy = j.at("class_balanced_accuracy").get<double>();
    r.probe_act_full = j.value("probe_act_full", 0.0);
    r.probe_domain_full = j.value("probe_domain_full", 0.0);
    if (j.contains("few_shot")) {
      for (const auto& [k, v] : j["few_shot"].items()) r.few_shot[std::stoul(k)] = v.get<double>();
    }
    r.few_shot_mean = j.value("few_shot_mean", 0.0);
    r.constraint_mean_truth = j.value("constraint_mean_truth", 1.0);
    r.ground_rules = j.value("ground_rules", std::size_t{0});
    r.state_usage_entropy = j.value("state_usage_entropy", 0.0);
    r.utterances = j.value("utterances", std::size_t{0});
    r.seed = j.value("seed", std::uint64_t{0});
    r.config_hash = j.value("config_hash", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("metrics report: ") + e.what());
  }
  return r;
}

bool MetricsReport::all_finite() const {
  bool ok = std::isfinite(ami) && std::isfinite(purity) && std::isfinite(class_balanced_accuracy) &&
            std::isfinite(probe_act_full) && std::isfinite(probe_domain_full) &&
            std::isfinite(few_shot_mean) && std::isfinite(constraint_mean_truth) &&
            std::isfinite(state_usage_entropy);
  for (const auto& [s, v] : few_shot) ok = ok && std::isfinite(v);
  return ok;
}

}  // namespace dsi
