#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dsiforge/autodiff.hpp"
#include "dsiforge/grounding.hpp"

namespace dsi {

enum class Logic { kLukasiewicz, kProductReal };
enum class Relaxation { kLinear, kLog };
enum class Normalization { kStandard, kNormalized };
enum class Aggregation { kMean, kSum };
enum class Connective { kAnd, kOr, kNot };

struct LogicConfig {
  Logic logic = Logic::kLukasiewicz;
  Relaxation relaxation = Relaxation::kLog;
  Normalization normalization = Normalization::kStandard;
  double epsilon_clamp = 1e-6;
  Aggregation aggregation = Aggregation::kMean;

  /// Throws ConfigError unless epsilon_clamp lies in (0, 0.1).
  void validate() const;
};

std::string_view to_string(Logic v);
std::string_view to_string(Relaxation v);
std::string_view to_string(Normalization v);
std::string_view to_string(Aggregation v);
Logic parse_logic(std::string_view s);
Relaxation parse_relaxation(std::string_view s);
Normalization parse_normalization(std::string_view s);
Aggregation parse_aggregation(std::string_view s);

/// Scalar soft connectives. n-ary and/or fold from the left; kNot takes
/// exactly one operand. Operands must lie in [0,1] (1e-9 slack), otherwise
/// std::domain_error.
double connective(Connective kind, std::span<const double> operands, Logic logic);

/// Differentiable counterparts over graph scalars. Constant operands are
/// folded into constants.
ad::NodeId connective(ad::Graph& g, Connective kind, std::span<const ad::NodeId> operands,
                      Logic logic);

/// (1 - p_c) / (K - 1): component c of the L1-renormalised complement of a
/// probability row. Throws std::domain_error for K < 2.
double normalized_negation(std::span<const double> row, std::size_t c);
ad::NodeId normalized_negation(ad::Graph& g, ad::NodeId decisions, std::size_t row,
                               std::size_t c);

struct RuleTruth {
  std::size_t ground_index = 0;
  ad::NodeId truth = 0;
  double weight = 1.0;
};

/// Truth of body -> head as not(AND body) OR (OR head). Observed literals are
/// constants; open literals read decisions[utterance, class]. Throws
/// ConfigError if a class index falls outside the decision matrix.
RuleTruth rule_truth(ad::Graph& g, const GroundRule& rule, std::size_t ground_index,
                     double weight, ad::NodeId decisions, const LogicConfig& cfg);

/// Aggregated penalty: lambda * (1 - t) for the linear relaxation and
/// -lambda * log(max(eps, t)) for the log relaxation; mean or sum over rules.
/// An empty list yields the constant 0.
ad::NodeId constraint_loss(ad::Graph& g, const std::vector<RuleTruth>& truths,
                           const LogicConfig& cfg);

/// After forward(): throws NumericError naming the first ground rule whose
/// truth is not finite.
void check_rule_truths(const ad::Graph& g, const std::vector<RuleTruth>& truths);

/// Builds truths for every ground rule against a fixed decision matrix and
/// returns their values.
std::vector<double> evaluate_rule_truths(const std::vector<GroundRule>& rules,
                                         const std::vector<double>& template_weights,
                                         const Tensor& decisions, const LogicConfig& cfg);

}  // namespace dsi
