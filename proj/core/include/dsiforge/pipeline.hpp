#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dsiforge/corpus.hpp"
#include "dsiforge/datagen.hpp"
#include "dsiforge/grounding.hpp"
#include "dsiforge/metrics.hpp"
#include "dsiforge/model.hpp"
#include "dsiforge/rules.hpp"
#include "dsiforge/softlogic.hpp"

namespace dsi {

enum class FewShotScheme { kNone, kOneShot, kThreeShot, kProportionalOneShot, kNShot };

std::string_view to_string(FewShotScheme s);
FewShotScheme parse_fewshot_scheme(std::string_view s);

struct Supervision {
  FewShotScheme scheme = FewShotScheme::kNone;
  std::size_t k = 1;  // labels per class for kNShot
};

struct DataConfig {
  /// JSONL corpus path; when empty the corpus is generated.
  std::string corpus;
  /// Generator configuration (path or "builtin:<name>") and dialog count.
  std::string generator = "builtin:multiwoz_like.json";
  std::size_t generate_n = 2000;
  std::uint64_t generate_seed = 0;
  /// Redraw the 80/10/10 split from the training seed.
  bool resample_splits = true;
  /// Rule file and token table (path or "builtin:<name>"); empty disables.
  std::string rules;
  std::string token_table;
  std::string output_dir;
  std::size_t vocab_max = 500;
  /// Latent slot names, index = latent state. Empty: gold state names in
  /// generator (or first-appearance) order, padded with "state<i>".
  std::vector<std::string> class_names;
  /// Rule-side class constants rewritten before grounding.
  std::map<std::string, std::string> class_aliases{{"init_request", "initial_request"}};
};

struct TrainingConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 32;  // dialogs
  double lr = 3e-3;
  std::uint64_t seed = 0;
  bool constraints = true;
  bool verbose = false;
};

struct EvaluationConfig {
  std::vector<std::size_t> shots{1, 5, 10};
  double min_prob = 0.0005;
  ProbeOptions probe;
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  LogicConfig logic;
  TrainingConfig training;
  Supervision supervision;
  EvaluationConfig evaluation;

  /// Throws ConfigError on invalid values or missing referenced files.
  void validate() const;
  /// Resolved configuration as canonical JSON.
  std::string to_json() const;
  /// FNV-1a of to_json() with output_dir and verbosity cleared.
  std::string hash() const;
};

/// Sections {data, model, logic, training, supervision, evaluation}; missing
/// keys keep their defaults, unknown keys are rejected. Relative paths are
/// resolved against `base_dir`.
RunConfig parse_run_config(const std::string& json_text, const std::string& base_dir = "");
RunConfig load_run_config(const std::string& path);
/// RFC 7386 merge patch of two JSON documents.
std::string merge_patch(const std::string& base_json, const std::string& patch_json);

/// Reassigns 80/10/10 train/test/validation splits by a seeded permutation.
void resample_splits(DialogCorpus& corpus, std::uint64_t seed);

/// Per-utterance label mask over `corpus` (dialog then turn order). Only
/// utterances whose gold class is known are selected.
std::vector<bool> select_fewshot_labels(const DialogCorpus& corpus, const Supervision& sup,
                                        std::uint64_t seed);

/// Everything derived from a RunConfig before training.
struct PreparedData {
  DialogCorpus corpus;  // truncated to max_dialog_len
  Vocabulary vocab;
  std::vector<std::string> class_names;
  std::vector<double> token_weights;
  Lexicons lexicons;
  PredicateSchema schema;
  RuleSet rules;
  std::optional<TokenClassTable> token_table;
};

PreparedData prepare_data(const RunConfig& cfg);

struct EpochLog {
  std::size_t epoch = 0;
  LossBreakdown train;  // mean over batches
  double validation_elbo = 0.0;  // negative ELBO per utterance, lower is better
  double state_entropy = 0.0;
};

struct EvaluationResult {
  MetricsReport report;
  StructureGraph graph;
  std::vector<std::size_t> predicted;  // per evaluated utterance
};

struct RunArtifacts {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  EvaluationResult evaluation;
  std::string config_snapshot;
  std::string checkpoint_path;  // empty when no output_dir
};

/// A trained model with the vocabulary and configuration it was built with.
struct LoadedModel {
  RunConfig config;
  Vocabulary vocab;
  std::vector<std::string> class_names;
  std::unique_ptr<DdVrnn> model;
};

RunArtifacts train(const RunConfig& cfg);
LoadedModel load_model(const std::string& checkpoint_path);
void save_model(const std::string& path, const DdVrnn& model, const RunConfig& cfg,
                const Vocabulary& vocab, const std::vector<std::string>& class_names);

/// Posterior-argmax states, metrics, probes, constraint satisfaction and the
/// induced structure. Uses the test split when present, all dialogs
/// otherwise; probes train on the remaining dialogs.
EvaluationResult evaluate(const DdVrnn& model, const PreparedData& data, const RunConfig& cfg);
EvaluationResult evaluate(const LoadedModel& loaded, const DialogCorpus& corpus);

struct SuiteRun {
  std::string cell;
  std::uint64_t seed = 0;
  std::string config_hash;
  bool ok = false;
  bool resumed = false;
  std::string error;
  MetricsReport report;
};

struct SuiteCell {
  std::string name;
  std::size_t runs = 0;
  std::size_t failures = 0;
  std::map<std::string, std::pair<double, double>> stats;  // metric -> (mean, std)
};

struct SuiteResult {
  std::vector<SuiteRun> runs;
  std::vector<SuiteCell> cells;
  std::string to_json() const;
};

/// axes_json: {"axis": {"label": <merge patch>, ...}, ...}. Every cell of the
/// Cartesian product runs once per seed in `output_dir/<config hash>`; runs
/// with an existing report are loaded instead of retrained.
SuiteResult run_suite(const std::string& base_json, const std::string& axes_json,
                      const std::vector<std::uint64_t>& seeds, const std::string& output_dir,
                      const std::string& base_dir = "");

}  // namespace dsi
