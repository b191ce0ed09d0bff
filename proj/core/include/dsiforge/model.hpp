#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dsiforge/autodiff.hpp"
#include "dsiforge/corpus.hpp"
#include "dsiforge/grounding.hpp"
#include "dsiforge/optim.hpp"
#include "dsiforge/rng.hpp"
#include "dsiforge/softlogic.hpp"
#include "dsiforge/tensor.hpp"

namespace dsi {

enum class BowWeighting { kUniform, kTfidf };

std::string_view to_string(BowWeighting w);
BowWeighting parse_bow_weighting(std::string_view s);

struct ModelConfig {
  std::size_t num_states = 10;  // K
  std::size_t vocab_size = 0;   // V
  std::size_t embed_dim = 32;
  std::size_t encoder_dim = 32;
  std::size_t dialog_dim = 32;
  std::size_t decoder_dim = 32;
  std::size_t bow_dim = 32;
  double lambda_bow = 0.1;
  BowWeighting bow_weighting = BowWeighting::kTfidf;
  double tfidf_alpha = 0.5;
  /// 0 feeds the posterior itself forward; > 0 draws Gumbel-softmax samples.
  double gumbel_tau = 0.0;
  std::size_t max_utterance_len = 40;
  std::size_t max_dialog_len = 10;
  /// Only "standard" (per-turn KL) is implemented.
  std::string kl_mode = "standard";

  /// Throws ConfigError on K < 2, V < 5, zero dims, lambda_bow < 0,
  /// alpha outside [0,1], tau < 0 or an unknown kl_mode.
  void validate() const;
};

/// Padded batch of whole dialogs. Utterances are numbered in dialog order then
/// turn order, which matches build_observations() on the same dialogs.
struct DialogBatch {
  std::size_t batch_size = 0;
  std::size_t max_turns = 0;
  std::size_t max_tokens = 0;
  /// [batch, turns, tokens] token ids, 0 = padding.
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> dialog_lengths;  // [batch]
  std::vector<std::size_t> token_lengths;   // [batch, turns]
  std::vector<int> speakers;                // [batch, turns]
  /// [batch, turns] latent index of a supervised turn, -1 when unlabeled.
  std::vector<int> labels;

  std::size_t utterance_count() const;
  std::size_t token_at(std::size_t b, std::size_t t, std::size_t i) const {
    return tokens[(b * max_turns + t) * max_tokens + i];
  }
  /// Token ids of one utterance without padding.
  std::vector<std::size_t> utterance(std::size_t b, std::size_t t) const;
};

/// Encodes dialogs, truncating turns and tokens to the configured maxima.
/// `labels`, when given, holds one entry per (truncated) utterance in batch
/// order. Throws ConfigError for an empty dialog or an utterance with no
/// tokens.
DialogBatch make_batch(const std::vector<const Dialog*>& dialogs, const Vocabulary& vocab,
                       const ModelConfig& cfg, const std::vector<int>* labels = nullptr);

/// tf-idf token weights over the vocabulary: tf is the corpus count, idf is
/// log(1 + D / df) with D the utterance count. Returns
/// (1 - alpha) / V + alpha * w' with w' the normalised tf-idf vector.
std::vector<double> tfidf_weights(const DialogCorpus& corpus, const Vocabulary& vocab,
                                  double alpha);
std::vector<double> uniform_weights(std::size_t vocab_size);

struct LossBreakdown {
  double reconstruction = 0.0;
  double kl = 0.0;
  double bow = 0.0;
  double ce = 0.0;
  double constraint = 0.0;
  double total = 0.0;
  /// Mean rule truth over the batch's ground rules (1 when there are none).
  double mean_truth = 1.0;
  std::size_t ground_rules = 0;

  bool finite() const;
  std::string to_string() const;
};

/// Constraint inputs for one batch: ground rules over the batch's utterances
/// and one weight per template.
struct BatchConstraints {
  const std::vector<GroundRule>* rules = nullptr;
  std::vector<double> template_weights;
  LogicConfig logic;
};

/// Node ids of one batch objective inside a graph.
struct BatchNodes {
  ad::NodeId reconstruction = 0;
  ad::NodeId kl = 0;
  ad::NodeId bow = 0;
  ad::NodeId ce = 0;
  ad::NodeId constraint = 0;
  ad::NodeId total = 0;
  /// [N, K] posterior in batch utterance order.
  ad::NodeId posterior = 0;
  std::vector<RuleTruth> truths;
};

/// Per-utterance outputs of a forward pass, rows in batch utterance order.
struct Inference {
  Tensor posterior;  // [N, K]
  Tensor features;   // [N, K + dialog_dim]: posterior logits and dialog state
  std::vector<std::size_t> states;  // argmax, ties to the lowest index
};

/// Desk-scale discrete-latent VRNN. GRU utterance encoder, GRU dialog
/// recurrence, learned transition prior p(z_t | z_{t-1}), posterior
/// q(z_t | x_t, h_{t-1}), GRU token decoder and a bag-of-words decoder.
class DdVrnn {
 public:
  DdVrnn(const ModelConfig& cfg, Rng& init_rng);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }

  /// Adds the full objective for `batch` to `g`. `token_weights` has one entry
  /// per vocabulary id; `gumbel_rng` is required when tau > 0.
  BatchNodes build_loss(ad::Graph& g, const DialogBatch& batch,
                        const std::vector<double>& token_weights,
                        const BatchConstraints* constraints, Rng* gumbel_rng) const;

  /// Reads component values after forward().
  static LossBreakdown read_breakdown(const ad::Graph& g, const BatchNodes& nodes);

  /// Posterior and probe features without building the decoders.
  Inference infer(const DialogBatch& batch) const;

  // Single-step pieces, evaluated with the current parameters.
  Tensor encode_utterance(const std::vector<std::size_t>& tokens) const;
  /// z_prev empty selects the learned start distribution.
  Tensor prior_step(const std::optional<Tensor>& z_prev) const;
  Tensor posterior_step(const Tensor& utterance_vec, const Tensor& dialog_state) const;
  double reconstruction_nll(const Tensor& z, const Tensor& context,
                            const std::vector<std::size_t>& targets) const;
  double bow_nll(const Tensor& z, const Tensor& context, const std::vector<std::size_t>& targets,
                 const std::vector<double>& weights) const;

 private:
  ModelConfig cfg_;
  ParameterStore params_;
};

/// Sum of q_i log(q_i / p_i) with 0 log 0 = 0 and p clamped at 1e-10.
double step_kl(const std::vector<double>& q, const std::vector<double>& p);

/// Builds, evaluates and returns the batch objective.
LossBreakdown batch_loss(const DdVrnn& model, const DialogBatch& batch,
                         const std::vector<double>& token_weights,
                         const BatchConstraints* constraints, Rng* gumbel_rng = nullptr);

}  // namespace dsi
