#pragma once

#include <string>
#include <vector>

namespace dsi {

struct GradcheckResult {
  std::string name;
  double error = 0.0;      // max relative error over all parameter elements
  double tolerance = 0.0;
  bool passed() const { return error < tolerance; }
};

/// Finite-difference checks of every primitive op (tolerance 1e-4) and of the
/// full loss on a tiny constrained batch (tolerance 1e-3).
std::vector<GradcheckResult> run_gradchecks();

/// Max over t in [0.01, 1] of | |d penalty / dt| * t - lambda | for the log
/// relaxation, with t the truth value of a single ground rule.
double log_relaxation_identity_error(double lambda);

}  // namespace dsi
