#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "dsiforge/datagen.hpp"
#include "dsiforge/tensor.hpp"

namespace dsi {

using Labels = std::vector<std::size_t>;

/// Maps arbitrary label strings to dense ids in order of first appearance.
Labels encode_labels(const std::vector<std::string>& names,
                     std::vector<std::string>* vocabulary = nullptr);

/// counts[i][j]: items with predicted cluster i and gold class j. Label ids
/// are compacted, so empty clusters or classes do not appear.
struct ContingencyTable {
  std::vector<std::vector<std::size_t>> counts;
  std::vector<std::size_t> row_sums;
  std::vector<std::size_t> col_sums;
  std::size_t total = 0;

  /// Throws std::invalid_argument on length mismatch or empty input.
  static ContingencyTable build(const Labels& pred, const Labels& gold);
};

/// Natural-log entropies and mutual information.
double entropy(const std::vector<std::size_t>& marginal, std::size_t total);
double mutual_information(const ContingencyTable& table);
/// Exact expectation of MI under the permutation (hypergeometric) model.
double expected_mutual_information(const ContingencyTable& table);

/// (MI - E[MI]) / (mean(H(pred), H(gold)) - E[MI]); 0 when the denominator
/// vanishes.
double ami(const Labels& pred, const Labels& gold);
/// (1/n) * sum over clusters of the majority-class count.
double purity(const Labels& pred, const Labels& gold);
/// Unweighted mean recall over classes present in gold.
double class_balanced_accuracy(const Labels& pred, const Labels& gold);

/// Multinomial logistic regression trained by full-batch gradient descent.
/// Features are standardised with the training statistics.
struct ProbeOptions {
  std::size_t iterations = 500;
  double learning_rate = 0.1;
  double l2 = 1e-4;
};

class LogisticProbe {
 public:
  /// `features` is [n, d]; labels lie in [0, num_classes).
  void fit(const Tensor& features, const Labels& labels, std::size_t num_classes,
           const ProbeOptions& opts = {});
  Labels predict(const Tensor& features) const;

 private:
  std::size_t dim_ = 0;
  std::size_t classes_ = 0;
  std::vector<double> mean_, scale_;
  std::vector<double> weights_;  // [(d + 1), C], last row is the bias
};

/// Trains on `shots` examples per class (0 = all training rows) drawn by
/// `seed`, reports class-balanced accuracy on the held-out rows. Under full
/// supervision every class of the held-out data must occur in training
/// (ConfigError otherwise).
double linear_probe(const Tensor& train_features, const Labels& train_labels,
                    const Tensor& test_features, const Labels& test_labels, std::size_t shots,
                    std::uint64_t seed, const ProbeOptions& opts = {});

/// Empirical start distribution and transition matrix over `num_states`
/// states. States that never transition get a self-loop and are terminal, as
/// are states that end a sequence.
StructureGraph induce_structure(const std::vector<Labels>& sequences, std::size_t num_states,
                                const std::vector<std::string>& names = {});

/// Entropy (nats) of the mean of a row-stochastic matrix.
double state_usage_entropy(const Tensor& posterior);

struct MetricsReport {
  double ami = 0.0;
  double purity = 0.0;
  /// Mean of the dialog-act and domain probes under full supervision.
  double class_balanced_accuracy = 0.0;
  double probe_act_full = 0.0;
  double probe_domain_full = 0.0;
  std::map<std::size_t, double> few_shot;  // shots -> accuracy
  double few_shot_mean = 0.0;
  double constraint_mean_truth = 1.0;
  std::size_t ground_rules = 0;
  double state_usage_entropy = 0.0;
  std::size_t utterances = 0;
  std::uint64_t seed = 0;
  std::string config_hash;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
  bool all_finite() const;
};

}  // namespace dsi
