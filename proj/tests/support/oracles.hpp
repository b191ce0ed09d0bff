#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They favour obviousness over speed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "dsiforge/grounding.hpp"
#include "dsiforge/metrics.hpp"
#include "dsiforge/rules.hpp"
#include "dsiforge/softlogic.hpp"

namespace dsi::oracle {

/// MI straight from the joint counts.
inline double plain_mi(const Labels& a, const Labels& b) {
  const double n = static_cast<double>(a.size());
  std::map<std::size_t, double> ca, cb;
  std::map<std::pair<std::size_t, std::size_t>, double> cab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ca[a[i]] += 1;
    cb[b[i]] += 1;
    cab[{a[i], b[i]}] += 1;
  }
  double mi = 0.0;
  for (const auto& [k, v] : cab) mi += v / n * std::log(n * v / (ca[k.first] * cb[k.second]));
  return mi;
}

/// E[MI] as the average MI over every permutation of `gold`.
inline double permutation_emi(const Labels& pred, Labels gold) {
  std::sort(gold.begin(), gold.end());
  double sum = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> idx(gold.size());
  std::iota(idx.begin(), idx.end(), 0);
  do {
    Labels g(gold.size());
    for (std::size_t i = 0; i < idx.size(); ++i) g[i] = gold[idx[i]];
    sum += plain_mi(pred, g);
    ++count;
  } while (std::next_permutation(idx.begin(), idx.end()));
  return sum / static_cast<double>(count);
}

inline double plain_entropy(const Labels& a) {
  std::map<std::size_t, double> c;
  for (std::size_t x : a) c[x] += 1;
  double h = 0.0;
  for (const auto& [k, v] : c) {
    const double p = v / static_cast<double>(a.size());
    h -= p * std::log(p);
  }
  return h;
}

inline double permutation_ami(const Labels& pred, const Labels& gold) {
  const double emi = permutation_emi(pred, gold);
  const double denom = 0.5 * (plain_entropy(pred) + plain_entropy(gold)) - emi;
  if (std::abs(denom) < 1e-15) return 0.0;
  return (plain_mi(pred, gold) - emi) / denom;
}

/// Calls `fn` with every labeling of n points into at most k clusters
/// (labels as raw assignments, including relabelings).
inline void for_each_labeling(std::size_t n, std::size_t k,
                              const std::function<void(const Labels&)>& fn) {
  Labels l(n, 0);
  while (true) {
    fn(l);
    std::size_t i = 0;
    while (i < n && ++l[i] == k) l[i++] = 0;
    if (i == n) return;
  }
}

/// Sum of rule penalties over every substitution of every template, with no
/// pruning. Substitutions without open literals carry no decision and are
/// skipped, matching the grounder's contract.
inline double brute_force_penalty(const RuleSet& rules, const ObservationStore& obs,
                                  const PredicateSchema& schema,
                                  const std::vector<std::vector<double>>& decisions,
                                  const LogicConfig& cfg) {
  const std::size_t n = obs.utterance_count();
  const std::size_t k = obs.class_names().size();
  double total = 0.0;
  for (const RuleTemplate& rule : rules.rules) {
    std::vector<std::string> vars;
    std::map<std::string, ArgType> var_type;
    for (const auto* lits : {&rule.body, &rule.head}) {
      for (const Literal& lit : *lits) {
        const PredicateInfo* info = schema.find(lit.predicate);
        for (std::size_t a = 0; a < lit.args.size(); ++a) {
          const Argument& arg = lit.args[a];
          if (arg.variable && !var_type.count(arg.name)) {
            vars.push_back(arg.name);
            var_type[arg.name] = info->args[a];
          }
        }
      }
    }
    std::vector<std::size_t> assign(vars.size(), 0);
    auto domain = [&](std::size_t v) { return var_type[vars[v]] == ArgType::kUtterance ? n : k; };
    while (true) {
      std::map<std::string, std::size_t> sub;
      for (std::size_t v = 0; v < vars.size(); ++v) sub[vars[v]] = assign[v];
      bool any_open = false;
      auto value = [&](const Literal& lit) {
        const PredicateInfo* info = schema.find(lit.predicate);
        std::vector<std::size_t> args;
        for (const Argument& arg : lit.args) {
          args.push_back(arg.variable ? sub.at(arg.name) : *obs.class_index(arg.name));
        }
        double v;
        if (info->open) {
          any_open = true;
          v = decisions[args[0]][args[1]];
        } else {
          v = obs.truth(lit.predicate, args) ? 1.0 : 0.0;
        }
        return lit.negated ? 1.0 - v : v;
      };
      std::vector<double> body, head;
      for (const Literal& l : rule.body) body.push_back(value(l));
      for (const Literal& l : rule.head) head.push_back(value(l));
      if (any_open) {
        const double ante = body.empty() ? 1.0 : connective(Connective::kAnd, body, cfg.logic);
        const std::vector<double> parts{1.0 - ante, connective(Connective::kOr, head, cfg.logic)};
        const double t = connective(Connective::kOr, parts, cfg.logic);
        total += cfg.relaxation == Relaxation::kLinear
                     ? rule.weight * (1.0 - t)
                     : -rule.weight * std::log(std::max(cfg.epsilon_clamp, t));
      }
      std::size_t i = 0;
      while (i < vars.size() && ++assign[i] == domain(i)) assign[i++] = 0;
      if (i == vars.size()) break;
    }
  }
  return total;
}

}  // namespace dsi::oracle
