#include "dsiforge/softlogic.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

#include "dsiforge/error.hpp"

namespace dsi {

void LogicConfig::validate() const {
  if (!(epsilon_clamp > 0.0 && epsilon_clamp < 0.1)) {
    throw ConfigError("logic.epsilon_clamp must lie in (0, 0.1), got " +
                      std::to_string(epsilon_clamp));
  }
}

std::string_view to_string(Logic v) {
  return v == Logic::kLukasiewicz ? "lukasiewicz" : "product-real";
}
std::string_view to_string(Relaxation v) { return v == Relaxation::kLinear ? "linear" : "log"; }
std::string_view to_string(Normalization v) {
  return v == Normalization::kStandard ? "standard" : "normalized";
}
std::string_view to_string(Aggregation v) { return v == Aggregation::kMean ? "mean" : "sum"; }

Logic parse_logic(std::string_view s) {
  if (s == "lukasiewicz") return Logic::kLukasiewicz;
  if (s == "product-real" || s == "product_real") return Logic::kProductReal;
  throw ConfigError("unknown logic '" + std::string(s) + "'");
}
Relaxation parse_relaxation(std::string_view s) {
  if (s == "linear") return Relaxation::kLinear;
  if (s == "log") return Relaxation::kLog;
  throw ConfigError("unknown relaxation '" + std::string(s) + "'");
}
Normalization parse_normalization(std::string_view s) {
  if (s == "standard") return Normalization::kStandard;
  if (s == "normalized") return Normalization::kNormalized;
  throw ConfigError("unknown normalization '" + std::string(s) + "'");
}
Aggregation parse_aggregation(std::string_view s) {
  if (s == "mean") return Aggregation::kMean;
  if (s == "sum") return Aggregation::kSum;
  throw ConfigError("unknown aggregation '" + std::string(s) + "'");
}

namespace {

double and2(double a, double b, Logic logic) {
  return logic == Logic::kLukasiewicz ? std::max(0.0, a + b - 1.0) : a * b;
}

double or2(double a, double b, Logic logic) {
  return logic == Logic::kLukasiewicz ? std::min(1.0, a + b) : a + b - a * b;
}

bool is_constant(const ad::Graph& g, ad::NodeId id) {
  return g.node(id).op == ad::OpKind::kConstant && g.node(id).value.size() == 1;
}

double constant_value(const ad::Graph& g, ad::NodeId id) { return g.node(id).value[0]; }

ad::NodeId not_node(ad::Graph& g, ad::NodeId a) {
  if (is_constant(g, a)) return g.scalar(1.0 - constant_value(g, a));
  return g.sub(g.scalar(1.0), a);
}

ad::NodeId and_node(ad::Graph& g, ad::NodeId a, ad::NodeId b, Logic logic) {
  if (is_constant(g, a) && is_constant(g, b)) {
    return g.scalar(and2(constant_value(g, a), constant_value(g, b), logic));
  }
  if (logic == Logic::kProductReal) return g.mul(a, b);
  // max(0, a + b - 1); a constant 1 operand leaves the other unchanged.
  if (is_constant(g, a) && constant_value(g, a) == 1.0) return b;
  if (is_constant(g, b) && constant_value(g, b) == 1.0) return a;
  return g.max_scalar(g.sub(g.add(a, b), g.scalar(1.0)), 0.0);
}

ad::NodeId or_node(ad::Graph& g, ad::NodeId a, ad::NodeId b, Logic logic) {
  if (is_constant(g, a) && is_constant(g, b)) {
    return g.scalar(or2(constant_value(g, a), constant_value(g, b), logic));
  }
  if (logic == Logic::kProductReal) return g.sub(g.add(a, b), g.mul(a, b));
  return g.min_scalar(g.add(a, b), 1.0);
}

}  // namespace

double connective(Connective kind, std::span<const double> operands, Logic logic) {
  for (double v : operands) {
    if (!(v >= -1e-9 && v <= 1.0 + 1e-9)) {
      throw std::domain_error("soft-logic operand " + std::to_string(v) + " outside [0,1]");
    }
  }
  if (kind == Connective::kNot) {
    if (operands.size() != 1) throw std::invalid_argument("not takes exactly one operand");
    return 1.0 - operands[0];
  }
  if (operands.empty()) throw std::invalid_argument("connective needs at least one operand");
  double acc = operands[0];
  for (std::size_t i = 1; i < operands.size(); ++i) {
    acc = kind == Connective::kAnd ? and2(acc, operands[i], logic) : or2(acc, operands[i], logic);
  }
  return acc;
}

ad::NodeId connective(ad::Graph& g, Connective kind, std::span<const ad::NodeId> operands,
                      Logic logic) {
  if (kind == Connective::kNot) {
    if (operands.size() != 1) throw std::invalid_argument("not takes exactly one operand");
    return not_node(g, operands[0]);
  }
  if (operands.empty()) throw std::invalid_argument("connective needs at least one operand");
  ad::NodeId acc = operands[0];
  for (std::size_t i = 1; i < operands.size(); ++i) {
    acc = kind == Connective::kAnd ? and_node(g, acc, operands[i], logic)
                                   : or_node(g, acc, operands[i], logic);
  }
  return acc;
}

double normalized_negation(std::span<const double> row, std::size_t c) {
  if (row.size() < 2) throw std::domain_error("normalized negation needs K >= 2");
  if (c >= row.size()) throw std::out_of_range("class index outside the row");
  return (1.0 - row[c]) / static_cast<double>(row.size() - 1);
}

ad::NodeId normalized_negation(ad::Graph& g, ad::NodeId decisions, std::size_t row,
                               std::size_t c) {
  const std::size_t k = g.node(decisions).shape.back();
  if (k < 2) throw std::domain_error("normalized negation needs K >= 2");
  ad::NodeId p = g.gather(decisions, {{row, c}});
  return g.div(g.sub(g.scalar(1.0), p), g.scalar(static_cast<double>(k - 1)));
}

RuleTruth rule_truth(ad::Graph& g, const GroundRule& rule, std::size_t ground_index,
                     double weight, ad::NodeId decisions, const LogicConfig& cfg) {
  const Shape& ds = g.node(decisions).shape;
  const std::size_t rows = ds.size() == 2 ? ds[0] : 1;
  const std::size_t k = ds.back();
  auto literal = [&](const GroundLiteral& lit) -> ad::NodeId {
    if (lit.observed) {
      return g.scalar(lit.negated ? 1.0 - lit.observed_value : lit.observed_value);
    }
    if (lit.class_index >= k) {
      throw ConfigError("unresolved class index " + std::to_string(lit.class_index) +
                        " for a decision matrix with " + std::to_string(k) + " columns");
    }
    if (lit.utterance >= rows) {
      throw ConfigError("ground rule references utterance " + std::to_string(lit.utterance) +
                        " outside the decision matrix");
    }
    if (lit.negated && cfg.normalization == Normalization::kNormalized) {
      return normalized_negation(g, decisions, lit.utterance, lit.class_index);
    }
    ad::NodeId p = g.gather(decisions, {{lit.utterance, lit.class_index}});
    return lit.negated ? not_node(g, p) : p;
  };
  std::vector<ad::NodeId> body, head;
  for (const GroundLiteral& l : rule.body) body.push_back(literal(l));
  for (const GroundLiteral& l : rule.head) head.push_back(literal(l));

  ad::NodeId truth;
  if (body.empty()) {
    truth = connective(g, Connective::kOr, head, cfg.logic);
  } else {
    ad::NodeId antecedent = connective(g, Connective::kAnd, body, cfg.logic);
    ad::NodeId negated = not_node(g, antecedent);
    ad::NodeId consequent = connective(g, Connective::kOr, head, cfg.logic);
    std::vector<ad::NodeId> parts{negated, consequent};
    truth = connective(g, Connective::kOr, parts, cfg.logic);
  }
  return RuleTruth{ground_index, truth, weight};
}

ad::NodeId constraint_loss(ad::Graph& g, const std::vector<RuleTruth>& truths,
                           const LogicConfig& cfg) {
  if (truths.empty()) {
    std::cerr << "warning: constraint loss over an empty rule list is 0\n";
    return g.scalar(0.0);
  }
  std::vector<ad::NodeId> penalties;
  penalties.reserve(truths.size());
  for (const RuleTruth& rt : truths) {
    ad::NodeId lambda = g.scalar(rt.weight);
    ad::NodeId p;
    if (cfg.relaxation == Relaxation::kLinear) {
      p = g.mul(lambda, g.sub(g.scalar(1.0), rt.truth));
    } else {
      p = g.mul(g.scalar(-rt.weight), g.log(g.max_scalar(rt.truth, cfg.epsilon_clamp)));
    }
    penalties.push_back(p);
  }
  ad::NodeId all = g.concat(penalties, 0);
  return cfg.aggregation == Aggregation::kMean ? g.reduce_mean(all) : g.reduce_sum(all);
}

void check_rule_truths(const ad::Graph& g, const std::vector<RuleTruth>& truths) {
  for (const RuleTruth& rt : truths) {
    const double v = g.value(rt.truth).item();
    if (!std::isfinite(v)) {
      throw NumericError("non-finite truth value for ground rule " +
                         std::to_string(rt.ground_index));
    }
  }
}

std::vector<double> evaluate_rule_truths(const std::vector<GroundRule>& rules,
                                         const std::vector<double>& template_weights,
                                         const Tensor& decisions, const LogicConfig& cfg) {
  ad::Graph g;
  ad::NodeId d = g.constant(decisions);
  std::vector<RuleTruth> truths;
  truths.reserve(rules.size());
  for (std::size_t i = 0; i < rules.size(); ++i) {
    truths.push_back(
        rule_truth(g, rules[i], i, template_weights.at(rules[i].template_index), d, cfg));
  }
  g.forward(ad::Bindings{});
  std::vector<double> out;
  out.reserve(truths.size());
  for (const RuleTruth& rt : truths) out.push_back(g.value(rt.truth).item());
  return out;
}

}  // namespace dsi
