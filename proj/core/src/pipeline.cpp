#include "dsiforge/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dsiforge/checkpoint.hpp"
#include "dsiforge/error.hpp"
#include "dsiforge/optim.hpp"
#include "dsiforge/resources.hpp"
#include "dsiforge/rng.hpp"

namespace dsi {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string_view to_string(FewShotScheme s) {
  switch (s) {
    case FewShotScheme::kNone: return "none";
    case FewShotScheme::kOneShot: return "one_shot";
    case FewShotScheme::kThreeShot: return "three_shot";
    case FewShotScheme::kProportionalOneShot: return "proportional_one_shot";
    case FewShotScheme::kNShot: return "n_shot";
  }
  return "none";
}

FewShotScheme parse_fewshot_scheme(std::string_view s) {
  if (s == "none") return FewShotScheme::kNone;
  if (s == "one_shot") return FewShotScheme::kOneShot;
  if (s == "three_shot") return FewShotScheme::kThreeShot;
  if (s == "proportional_one_shot") return FewShotScheme::kProportionalOneShot;
  if (s == "n_shot") return FewShotScheme::kNShot;
  throw ConfigError("unknown supervision scheme '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

bool is_builtin(const std::string& p) { return p.rfind("builtin:", 0) == 0; }

std::string resolve_path(const std::string& p, const std::string& base_dir) {
  if (p.empty() || is_builtin(p)) return p;
  fs::path path(p);
  if (path.is_relative() && !base_dir.empty()) path = fs::path(base_dir) / path;
  return fs::absolute(path).lexically_normal().string();
}

/// Reads keys of one section and rejects the ones nobody asked for.
class Section {
 public:
  Section(const json& root, const char* name) : name_(name) {
    if (root.contains(name)) {
      if (!root[name].is_object()) throw ConfigError(std::string("section '") + name + "' must be an object");
      obj_ = root[name];
    } else {
      obj_ = json::object();
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!obj_.contains(key)) return;
    try {
      out = obj_[key].get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(name_ + "." + key + ": " + e.what());
    }
  }

  void finish() const {
    for (const auto& [k, v] : obj_.items()) {
      if (!used_.count(k)) throw ConfigError("unknown key '" + name_ + "." + k + "'");
    }
  }

 private:
  std::string name_;
  json obj_;
  std::set<std::string> used_;
};

json config_json(const RunConfig& c) {
  json j;
  const DataConfig& d = c.data;
  j["data"] = {{"corpus", d.corpus},
               {"generator", d.generator},
               {"generate_n", d.generate_n},
               {"generate_seed", d.generate_seed},
               {"resample_splits", d.resample_splits},
               {"rules", d.rules},
               {"token_table", d.token_table},
               {"output_dir", d.output_dir},
               {"vocab_max", d.vocab_max},
               {"class_names", d.class_names},
               {"class_aliases", d.class_aliases}};
  const ModelConfig& m = c.model;
  j["model"] = {{"num_states", m.num_states},
                {"vocab_size", m.vocab_size},
                {"embed_dim", m.embed_dim},
                {"encoder_dim", m.encoder_dim},
                {"dialog_dim", m.dialog_dim},
                {"decoder_dim", m.decoder_dim},
                {"bow_dim", m.bow_dim},
                {"lambda_bow", m.lambda_bow},
                {"bow_weighting", std::string(to_string(m.bow_weighting))},
                {"tfidf_alpha", m.tfidf_alpha},
                {"gumbel_tau", m.gumbel_tau},
                {"max_utterance_len", m.max_utterance_len},
                {"max_dialog_len", m.max_dialog_len},
                {"kl_mode", m.kl_mode}};
  const LogicConfig& l = c.logic;
  j["logic"] = {{"logic", std::string(to_string(l.logic))},
                {"relaxation", std::string(to_string(l.relaxation))},
                {"normalization", std::string(to_string(l.normalization))},
                {"epsilon_clamp", l.epsilon_clamp},
                {"aggregation", std::string(to_string(l.aggregation))}};
  const TrainingConfig& t = c.training;
  j["training"] = {{"epochs", t.epochs},
                   {"batch_size", t.batch_size},
                   {"lr", t.lr},
                   {"seed", t.seed},
                   {"constraints", t.constraints},
                   {"verbose", t.verbose}};
  j["supervision"] = {{"scheme", std::string(to_string(c.supervision.scheme))},
                      {"k", c.supervision.k}};
  const EvaluationConfig& e = c.evaluation;
  j["evaluation"] = {{"shots", e.shots},
                     {"min_prob", e.min_prob},
                     {"probe_iterations", e.probe.iterations},
                     {"probe_lr", e.probe.learning_rate},
                     {"probe_l2", e.probe.l2}};
  return j;
}

}  // namespace

void RunConfig::validate() const {
  ModelConfig m = model;
  if (m.vocab_size == 0) m.vocab_size = 5;
  m.validate();
  logic.validate();
  if (training.epochs < 1) throw ConfigError("training.epochs must be >= 1");
  if (training.batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
  if (!(training.lr > 0.0)) throw ConfigError("training.lr must be positive");
  if (data.corpus.empty() && data.generate_n == 0) {
    throw ConfigError("data.generate_n must be >= 1 when no corpus is given");
  }
  if (data.vocab_max != 0 && data.vocab_max < 5) throw ConfigError("data.vocab_max must be >= 5");
  if (!data.class_names.empty() && data.class_names.size() != model.num_states) {
    throw ConfigError("data.class_names must list exactly num_states names");
  }
  if (supervision.scheme == FewShotScheme::kNShot && supervision.k == 0) {
    throw ConfigError("supervision.k must be >= 1 for n_shot");
  }
  auto must_exist = [](const std::string& p, const char* what) {
    if (p.empty() || is_builtin(p)) return;
    if (!fs::exists(p)) throw ConfigError(std::string(what) + " '" + p + "' does not exist");
  };
  must_exist(data.corpus, "data.corpus");
  if (data.corpus.empty()) must_exist(data.generator, "data.generator");
  must_exist(data.rules, "data.rules");
  must_exist(data.token_table, "data.token_table");
  if (!(evaluation.min_prob >= 0.0 && evaluation.min_prob <= 1.0)) {
    throw ConfigError("evaluation.min_prob must lie in [0, 1]");
  }
}

std::string RunConfig::to_json() const { return config_json(*this).dump(2); }

std::string RunConfig::hash() const {
  RunConfig c = *this;
  c.data.output_dir.clear();
  c.training.verbose = false;
  return hex64(fnv1a64(c.to_json()));
}

RunConfig parse_run_config(const std::string& text, const std::string& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("run config must be a JSON object");
  static const std::set<std::string> kSections{"data",     "model",       "logic",
                                               "training", "supervision", "evaluation"};
  for (const auto& [k, v] : root.items()) {
    if (!kSections.count(k)) throw ConfigError("unknown config section '" + k + "'");
  }
  RunConfig c;
  {
    Section s(root, "data");
    s.get("corpus", c.data.corpus);
    s.get("generator", c.data.generator);
    s.get("generate_n", c.data.generate_n);
    s.get("generate_seed", c.data.generate_seed);
    s.get("resample_splits", c.data.resample_splits);
    s.get("rules", c.data.rules);
    s.get("token_table", c.data.token_table);
    s.get("output_dir", c.data.output_dir);
    s.get("vocab_max", c.data.vocab_max);
    s.get("class_names", c.data.class_names);
    s.get("class_aliases", c.data.class_aliases);
    s.finish();
    c.data.corpus = resolve_path(c.data.corpus, base_dir);
    c.data.generator = resolve_path(c.data.generator, base_dir);
    c.data.rules = resolve_path(c.data.rules, base_dir);
    c.data.token_table = resolve_path(c.data.token_table, base_dir);
    c.data.output_dir = resolve_path(c.data.output_dir, base_dir);
  }
  {
    Section s(root, "model");
    std::string weighting(to_string(c.model.bow_weighting));
    s.get("num_states", c.model.num_states);
    s.get("vocab_size", c.model.vocab_size);
    s.get("embed_dim", c.model.embed_dim);
    s.get("encoder_dim", c.model.encoder_dim);
    s.get("dialog_dim", c.model.dialog_dim);
    s.get("decoder_dim", c.model.decoder_dim);
    s.get("bow_dim", c.model.bow_dim);
    s.get("lambda_bow", c.model.lambda_bow);
    s.get("bow_weighting", weighting);
    s.get("tfidf_alpha", c.model.tfidf_alpha);
    s.get("gumbel_tau", c.model.gumbel_tau);
    s.get("max_utterance_len", c.model.max_utterance_len);
    s.get("max_dialog_len", c.model.max_dialog_len);
    s.get("kl_mode", c.model.kl_mode);
    s.finish();
    c.model.bow_weighting = parse_bow_weighting(weighting);
  }
  {
    Section s(root, "logic");
    std::string logic(to_string(c.logic.logic)), relax(to_string(c.logic.relaxation)),
        norm(to_string(c.logic.normalization)), agg(to_string(c.logic.aggregation));
    s.get("logic", logic);
    s.get("relaxation", relax);
    s.get("normalization", norm);
    s.get("epsilon_clamp", c.logic.epsilon_clamp);
    s.get("aggregation", agg);
    s.finish();
    c.logic.logic = parse_logic(logic);
    c.logic.relaxation = parse_relaxation(relax);
    c.logic.normalization = parse_normalization(norm);
    c.logic.aggregation = parse_aggregation(agg);
  }
  {
    Section s(root, "training");
    s.get("epochs", c.training.epochs);
    s.get("batch_size", c.training.batch_size);
    s.get("lr", c.training.lr);
    s.get("seed", c.training.seed);
    s.get("constraints", c.training.constraints);
    s.get("verbose", c.training.verbose);
    s.finish();
  }
  {
    Section s(root, "supervision");
    std::string scheme(to_string(c.supervision.scheme));
    s.get("scheme", scheme);
    s.get("k", c.supervision.k);
    s.finish();
    c.supervision.scheme = parse_fewshot_scheme(scheme);
  }
  {
    Section s(root, "evaluation");
    s.get("shots", c.evaluation.shots);
    s.get("min_prob", c.evaluation.min_prob);
    s.get("probe_iterations", c.evaluation.probe.iterations);
    s.get("probe_lr", c.evaluation.probe.learning_rate);
    s.get("probe_l2", c.evaluation.probe.l2);
    s.finish();
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_file(path), fs::path(path).parent_path().string());
}

std::string merge_patch(const std::string& base_json, const std::string& patch_json) {
  try {
    json base = json::parse(base_json);
    base.merge_patch(json::parse(patch_json));
    return base.dump(2);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("merge patch: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Data preparation

void resample_splits(DialogCorpus& corpus, std::uint64_t seed) {
  const std::size_t n = corpus.dialogs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = Rng(seed).split(0x5911757ULL);
  rng.shuffle(order);
  const auto n_train = static_cast<std::size_t>(std::llround(0.8 * static_cast<double>(n)));
  const auto n_test = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
  for (std::size_t r = 0; r < n; ++r) {
    corpus.dialogs[order[r]].split =
        r < n_train ? Split::kTrain : (r < n_train + n_test ? Split::kTest : Split::kValidation);
  }
}

std::vector<bool> select_fewshot_labels(const DialogCorpus& corpus, const Supervision& sup,
                                        std::uint64_t seed) {
  const std::size_t n = corpus.utterance_count();
  std::vector<bool> mask(n, false);
  if (sup.scheme == FewShotScheme::kNone) return mask;
  corpus.require_labels("few-shot supervision");

  const std::vector<std::string> classes = corpus.state_names();
  std::map<std::string, std::size_t> class_index;
  for (std::size_t i = 0; i < classes.size(); ++i) class_index[classes[i]] = i;
  std::vector<std::vector<std::size_t>> members(classes.size());
  std::size_t u = 0;
  for (const Dialog& d : corpus.dialogs) {
    for (const Turn& t : d.turns) members[class_index.at(*t.state)].push_back(u++);
  }

  std::vector<std::size_t> quota(classes.size(), 0);
  switch (sup.scheme) {
    case FewShotScheme::kOneShot: std::fill(quota.begin(), quota.end(), 1); break;
    case FewShotScheme::kThreeShot: std::fill(quota.begin(), quota.end(), 3); break;
    case FewShotScheme::kNShot: std::fill(quota.begin(), quota.end(), sup.k); break;
    case FewShotScheme::kProportionalOneShot: {
      const std::size_t budget = classes.size();
      std::vector<std::size_t> eligible;
      std::size_t eligible_total = 0;
      for (std::size_t c = 0; c < classes.size(); ++c) {
        if (static_cast<double>(members[c].size()) >= 0.01 * static_cast<double>(n)) {
          eligible.push_back(c);
          eligible_total += members[c].size();
        }
      }
      std::vector<std::pair<double, std::size_t>> remainders;
      std::size_t assigned = 0;
      for (std::size_t c : eligible) {
        const double exact = static_cast<double>(budget) * static_cast<double>(members[c].size()) /
                             static_cast<double>(eligible_total);
        quota[c] = static_cast<std::size_t>(std::floor(exact));
        assigned += quota[c];
        remainders.emplace_back(exact - std::floor(exact), c);
      }
      std::stable_sort(remainders.begin(), remainders.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      for (std::size_t i = 0; assigned < budget && i < remainders.size(); ++i, ++assigned) {
        ++quota[remainders[i].second];
      }
      break;
    }
    case FewShotScheme::kNone: break;
  }

  const Rng root(seed);
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<std::size_t> pool = members[c];
    Rng rng = root.split(fnv1a64(classes[c]));
    rng.shuffle(pool);
    for (std::size_t i = 0; i < std::min(quota[c], pool.size()); ++i) mask[pool[i]] = true;
  }
  return mask;
}

namespace {

void truncate_corpus(DialogCorpus& corpus, const ModelConfig& m) {
  for (Dialog& d : corpus.dialogs) {
    if (d.turns.size() > m.max_dialog_len) d.turns.resize(m.max_dialog_len);
    for (Turn& t : d.turns) {
      if (t.tokens.size() > m.max_utterance_len) t.tokens.resize(m.max_utterance_len);
    }
  }
}

std::string alias(const std::map<std::string, std::string>& aliases, const std::string& name) {
  auto it = aliases.find(name);
  return it == aliases.end() ? name : it->second;
}

void apply_aliases(RuleSet& rules, const std::map<std::string, std::string>& aliases) {
  for (RuleTemplate& r : rules.rules) {
    for (auto* lits : {&r.body, &r.head}) {
      for (Literal& l : *lits) {
        for (Argument& a : l.args) {
          if (!a.variable) a.name = alias(aliases, a.name);
        }
      }
    }
  }
}

std::vector<std::string> derive_class_names(const RunConfig& cfg, const DialogCorpus& corpus,
                                            const std::vector<std::string>& generator_states) {
  if (!cfg.data.class_names.empty()) return cfg.data.class_names;
  std::vector<std::string> names = generator_states.empty() ? corpus.state_names() : generator_states;
  if (names.size() > cfg.model.num_states) {
    throw ConfigError("corpus has " + std::to_string(names.size()) + " gold states but the model has " +
                      std::to_string(cfg.model.num_states) + " latent states; set data.class_names");
  }
  for (std::size_t i = names.size(); i < cfg.model.num_states; ++i) {
    names.push_back("state" + std::to_string(i));
  }
  return names;
}

/// Rules, lexicons and token table shared by training and evaluation.
void prepare_symbols(const RunConfig& cfg, PreparedData& p) {
  p.lexicons = default_lexicons();
  std::vector<std::string> keys;
  for (const auto& [k, v] : p.lexicons) keys.push_back(k);
  p.schema = PredicateSchema::standard(keys);
  if (!cfg.data.rules.empty()) {
    p.rules = parse_ruleset(read_resource(cfg.data.rules), p.schema);
    apply_aliases(p.rules, cfg.data.class_aliases);
  }
  if (!cfg.data.token_table.empty()) {
    TokenClassTable table = TokenClassTable::parse(read_resource(cfg.data.token_table));
    for (auto& e : table.entries) e.class_name = alias(cfg.data.class_aliases, e.class_name);
    p.token_table = std::move(table);
  }
}

DialogCorpus gather(const DialogCorpus& corpus, const std::vector<std::size_t>& idx) {
  DialogCorpus out;
  out.dialogs.reserve(idx.size());
  for (std::size_t i : idx) out.dialogs.push_back(corpus.dialogs[i]);
  return out;
}

std::vector<std::size_t> split_indices(const DialogCorpus& corpus, Split s) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < corpus.dialogs.size(); ++i) {
    if (corpus.dialogs[i].split == s) out.push_back(i);
  }
  return out;
}

std::vector<GroundRule> ground_dialogs(const PreparedData& data, const DialogCorpus& sub) {
  ObservationStore obs = build_observations(
      sub, data.class_names, data.lexicons, data.token_table ? &*data.token_table : nullptr);
  return ground(data.rules, obs, data.schema);
}

std::vector<double> template_weights(const RuleSet& rules) {
  std::vector<double> w;
  for (const RuleTemplate& r : rules.rules) w.push_back(r.weight);
  return w;
}

}  // namespace

PreparedData prepare_data(const RunConfig& cfg) {
  cfg.validate();
  PreparedData p;
  std::vector<std::string> generator_states;
  if (!cfg.data.corpus.empty()) {
    p.corpus = import_corpus(cfg.data.corpus);
  } else {
    GeneratorConfig gen = parse_generator_config(read_resource(cfg.data.generator));
    gen.seed = cfg.data.generate_seed;
    p.corpus = generate_corpus(gen, cfg.data.generate_n);
    generator_states = gen.graph.states;
  }
  if (cfg.data.resample_splits) resample_splits(p.corpus, cfg.training.seed);
  truncate_corpus(p.corpus, cfg.model);

  DialogCorpus train_part = p.corpus.subset(Split::kTrain);
  if (train_part.dialogs.empty()) train_part = p.corpus;
  p.vocab = Vocabulary::build(train_part, cfg.data.vocab_max);
  p.class_names = derive_class_names(cfg, p.corpus, generator_states);
  p.token_weights = cfg.model.bow_weighting == BowWeighting::kTfidf
                        ? tfidf_weights(train_part, p.vocab, cfg.model.tfidf_alpha)
                        : uniform_weights(p.vocab.size());
  prepare_symbols(cfg, p);
  return p;
}

// ---------------------------------------------------------------------------
// Persistence

void save_model(const std::string& path, const DdVrnn& model, const RunConfig& cfg,
                const Vocabulary& vocab, const std::vector<std::string>& class_names) {
  Checkpoint ck;
  ck.tensors = model.params().snapshot();
  ck.rng = Rng(cfg.training.seed);
  json meta;
  meta["config"] = config_json(cfg);
  meta["vocab"] = vocab.tokens();
  meta["class_names"] = class_names;
  ck.metadata = meta.dump();
  save_checkpoint(path, ck);
}

LoadedModel load_model(const std::string& checkpoint_path) {
  const Checkpoint ck = load_checkpoint(checkpoint_path);
  LoadedModel out;
  try {
    const json meta = json::parse(ck.metadata);
    out.config = parse_run_config(meta.at("config").dump());
    std::string vocab_text;
    for (const auto& tok : meta.at("vocab")) vocab_text += tok.get<std::string>() + "\n";
    out.vocab = Vocabulary::from_text(vocab_text);
    out.class_names = meta.at("class_names").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw ConfigError("checkpoint metadata: " + std::string(e.what()));
  }
  if (out.config.model.vocab_size != out.vocab.size()) {
    throw ConfigError("checkpoint vocabulary size does not match its model configuration");
  }
  Rng init(0);
  out.model = std::make_unique<DdVrnn>(out.config.model, init);
  if (ck.tensors.size() != out.model->params().entries().size()) {
    throw ConfigError("checkpoint holds " + std::to_string(ck.tensors.size()) +
                      " tensors, model expects " +
                      std::to_string(out.model->params().entries().size()));
  }
  out.model->params().restore(ck.tensors);
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

struct Predictions {
  Tensor posterior;
  Tensor features;
  std::vector<std::size_t> states;
};

Predictions predict(const DdVrnn& model, const DialogCorpus& corpus, const Vocabulary& vocab,
                    std::size_t batch_size) {
  const ModelConfig& m = model.config();
  const std::size_t n = corpus.utterance_count();
  const std::size_t k = m.num_states;
  const std::size_t d = k + m.dialog_dim;
  Predictions out;
  out.posterior = Tensor({n, k});
  out.features = Tensor({n, d});
  std::size_t row = 0;
  for (std::size_t start = 0; start < corpus.dialogs.size(); start += batch_size) {
    std::vector<const Dialog*> ptrs;
    for (std::size_t i = start; i < std::min(start + batch_size, corpus.dialogs.size()); ++i) {
      ptrs.push_back(&corpus.dialogs[i]);
    }
    const Inference inf = model.infer(make_batch(ptrs, vocab, m));
    std::copy(inf.posterior.data.begin(), inf.posterior.data.end(),
              out.posterior.data.begin() + row * k);
    std::copy(inf.features.data.begin(), inf.features.data.end(),
              out.features.data.begin() + row * d);
    out.states.insert(out.states.end(), inf.states.begin(), inf.states.end());
    row += inf.states.size();
  }
  return out;
}

std::vector<std::string> gold_states(const DialogCorpus& corpus) {
  std::vector<std::string> out;
  for (const Dialog& dl : corpus.dialogs) {
    for (const Turn& t : dl.turns) out.push_back(*t.state);
  }
  return out;
}

std::vector<std::string> utterance_domains(const DialogCorpus& corpus) {
  std::vector<std::string> out;
  for (const Dialog& dl : corpus.dialogs) {
    for (std::size_t t = 0; t < dl.turns.size(); ++t) out.push_back(dl.domain);
  }
  return out;
}

/// Encodes two label lists with one shared dictionary.
std::pair<Labels, Labels> encode_pair(const std::vector<std::string>& a,
                                      const std::vector<std::string>& b) {
  std::vector<std::string> all = a;
  all.insert(all.end(), b.begin(), b.end());
  Labels enc = encode_labels(all);
  Labels la(enc.begin(), enc.begin() + static_cast<std::ptrdiff_t>(a.size()));
  Labels lb(enc.begin() + static_cast<std::ptrdiff_t>(a.size()), enc.end());
  return {std::move(la), std::move(lb)};
}

}  // namespace

EvaluationResult evaluate(const DdVrnn& model, const PreparedData& data, const RunConfig& cfg) {
  data.corpus.require_labels("evaluation");
  std::vector<std::size_t> eval_idx = split_indices(data.corpus, Split::kTest);
  std::vector<std::size_t> probe_idx = split_indices(data.corpus, Split::kTrain);
  if (eval_idx.empty()) {
    // No held-out split: score every dialog, probe on a seeded 80/20 partition.
    std::vector<std::size_t> all(data.corpus.dialogs.size());
    std::iota(all.begin(), all.end(), 0);
    Rng rng = Rng(cfg.training.seed).split(0x9b0be);
    rng.shuffle(all);
    const std::size_t cut = std::max<std::size_t>(1, (all.size() * 4) / 5);
    probe_idx.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cut));
    std::sort(probe_idx.begin(), probe_idx.end());
    eval_idx.resize(data.corpus.dialogs.size());
    std::iota(eval_idx.begin(), eval_idx.end(), 0);
  }
  const DialogCorpus eval_corpus = gather(data.corpus, eval_idx);
  const std::size_t bs = cfg.training.batch_size;
  const Predictions pred = predict(model, eval_corpus, data.vocab, bs);

  EvaluationResult res;
  MetricsReport& rep = res.report;
  const std::vector<std::string> gold = gold_states(eval_corpus);
  const Labels gold_ids = encode_labels(gold);
  rep.ami = ami(pred.states, gold_ids);
  rep.purity = purity(pred.states, gold_ids);
  rep.utterances = gold.size();
  rep.state_usage_entropy = state_usage_entropy(pred.posterior);
  res.predicted = pred.states;

  // Probes: train on the probe dialogs, score on the evaluated ones. Without
  // a test split the probe partition is held out from the probe training set.
  std::vector<std::size_t> probe_test_idx = eval_idx;
  if (split_indices(data.corpus, Split::kTest).empty()) {
    std::set<std::size_t> train_set(probe_idx.begin(), probe_idx.end());
    probe_test_idx.clear();
    for (std::size_t i : eval_idx) {
      if (!train_set.count(i)) probe_test_idx.push_back(i);
    }
  }
  const DialogCorpus probe_train = gather(data.corpus, probe_idx);
  const DialogCorpus probe_test = gather(data.corpus, probe_test_idx);
  if (!probe_train.dialogs.empty() && !probe_test.dialogs.empty()) {
    const Predictions ptrain = predict(model, probe_train, data.vocab, bs);
    const Predictions ptest =
        probe_test_idx == eval_idx ? pred : predict(model, probe_test, data.vocab, bs);
    auto [act_train, act_test] = encode_pair(gold_states(probe_train), gold_states(probe_test));
    auto [dom_train, dom_test] =
        encode_pair(utterance_domains(probe_train), utterance_domains(probe_test));
    const std::uint64_t seed = cfg.training.seed;
    rep.probe_act_full = linear_probe(ptrain.features, act_train, ptest.features, act_test, 0,
                                      seed, cfg.evaluation.probe);
    rep.probe_domain_full = linear_probe(ptrain.features, dom_train, ptest.features, dom_test, 0,
                                         seed, cfg.evaluation.probe);
    rep.class_balanced_accuracy = 0.5 * (rep.probe_act_full + rep.probe_domain_full);
    double sum = 0.0;
    for (std::size_t shots : cfg.evaluation.shots) {
      const double acc = linear_probe(ptrain.features, act_train, ptest.features, act_test, shots,
                                      seed + shots, cfg.evaluation.probe);
      rep.few_shot[shots] = acc;
      sum += acc;
    }
    if (!cfg.evaluation.shots.empty()) {
      rep.few_shot_mean = sum / static_cast<double>(cfg.evaluation.shots.size());
    }
  }

  if (!data.rules.rules.empty()) {
    const std::vector<GroundRule> ground_rules = ground_dialogs(data, eval_corpus);
    rep.ground_rules = ground_rules.size();
    if (!ground_rules.empty()) {
      const std::vector<double> truths = evaluate_rule_truths(
          ground_rules, template_weights(data.rules), pred.posterior, cfg.logic);
      rep.constraint_mean_truth =
          std::accumulate(truths.begin(), truths.end(), 0.0) / static_cast<double>(truths.size());
    }
  }

  std::vector<Labels> sequences;
  std::size_t u = 0;
  for (const Dialog& dl : eval_corpus.dialogs) {
    sequences.emplace_back(pred.states.begin() + static_cast<std::ptrdiff_t>(u),
                           pred.states.begin() + static_cast<std::ptrdiff_t>(u + dl.turns.size()));
    u += dl.turns.size();
  }
  res.graph = induce_structure(sequences, model.config().num_states, data.class_names);
  rep.seed = cfg.training.seed;
  rep.config_hash = cfg.hash();
  return res;
}

EvaluationResult evaluate(const LoadedModel& loaded, const DialogCorpus& corpus) {
  PreparedData p;
  p.corpus = corpus;
  truncate_corpus(p.corpus, loaded.config.model);
  p.vocab = loaded.vocab;
  p.class_names = loaded.class_names;
  std::size_t tokens = 0, unknown = 0;
  for (const Dialog& d : p.corpus.dialogs) {
    for (const Turn& t : d.turns) {
      for (const std::string& tok : t.tokens) {
        ++tokens;
        if (p.vocab.id(tok) == Vocabulary::kUnk) ++unknown;
      }
    }
  }
  if (tokens == 0 || 2 * unknown > tokens) {
    throw ConfigError("vocabulary mismatch: " + std::to_string(unknown) + " of " +
                      std::to_string(tokens) + " corpus tokens are unknown to the checkpoint");
  }
  prepare_symbols(loaded.config, p);
  return evaluate(*loaded.model, p, loaded.config);
}

// ---------------------------------------------------------------------------
// Training

namespace {

void add_into(LossBreakdown& acc, const LossBreakdown& b, double w) {
  acc.reconstruction += w * b.reconstruction;
  acc.kl += w * b.kl;
  acc.bow += w * b.bow;
  acc.ce += w * b.ce;
  acc.constraint += w * b.constraint;
  acc.total += w * b.total;
  acc.mean_truth += w * b.mean_truth;
  acc.ground_rules += b.ground_rules;
}

double validation_elbo(const DdVrnn& model, const PreparedData& data,
                       const std::vector<std::size_t>& idx, std::size_t batch_size) {
  double sum = 0.0;
  std::size_t utts = 0;
  for (std::size_t start = 0; start < idx.size(); start += batch_size) {
    std::vector<const Dialog*> ptrs;
    for (std::size_t i = start; i < std::min(start + batch_size, idx.size()); ++i) {
      ptrs.push_back(&data.corpus.dialogs[idx[i]]);
    }
    const DialogBatch batch = make_batch(ptrs, data.vocab, model.config());
    ad::Graph g;
    BatchNodes nodes = model.build_loss(g, batch, data.token_weights, nullptr, nullptr);
    g.forward(model.params().bindings());
    const double n = static_cast<double>(batch.utterance_count());
    sum += n * (g.value(nodes.reconstruction).item() + g.value(nodes.kl).item());
    utts += batch.utterance_count();
  }
  return sum / static_cast<double>(utts);
}

json epochs_json(const std::vector<EpochLog>& epochs, std::size_t best) {
  json arr = json::array();
  for (const EpochLog& e : epochs) {
    arr.push_back({{"epoch", e.epoch},
                   {"reconstruction", e.train.reconstruction},
                   {"kl", e.train.kl},
                   {"bow", e.train.bow},
                   {"ce", e.train.ce},
                   {"constraint", e.train.constraint},
                   {"total", e.train.total},
                   {"mean_truth", e.train.mean_truth},
                   {"ground_rules", e.train.ground_rules},
                   {"validation_elbo", e.validation_elbo},
                   {"state_entropy", e.state_entropy}});
  }
  return {{"best_epoch", best}, {"epochs", arr}};
}

}  // namespace

RunArtifacts train(const RunConfig& input_cfg) {
  PreparedData data = prepare_data(input_cfg);
  RunConfig cfg = input_cfg;
  cfg.model.vocab_size = data.vocab.size();
  const ModelConfig& m = cfg.model;

  const Rng root(cfg.training.seed);
  Rng init_rng = root.split(1);
  Rng gumbel_rng = root.split(3);
  DdVrnn model(m, init_rng);

  std::vector<std::size_t> train_idx = split_indices(data.corpus, Split::kTrain);
  if (train_idx.empty()) {
    train_idx.resize(data.corpus.dialogs.size());
    std::iota(train_idx.begin(), train_idx.end(), 0);
  }
  std::vector<std::size_t> val_idx = split_indices(data.corpus, Split::kValidation);
  if (val_idx.empty()) val_idx = train_idx;

  // Few-shot labels are drawn from the training dialogs only.
  std::vector<std::vector<int>> dialog_labels(data.corpus.dialogs.size());
  {
    const DialogCorpus train_corpus = gather(data.corpus, train_idx);
    const std::vector<bool> mask =
        select_fewshot_labels(train_corpus, cfg.supervision, cfg.training.seed);
    std::map<std::string, std::size_t> latent;
    for (std::size_t i = 0; i < data.class_names.size(); ++i) latent[data.class_names[i]] = i;
    std::size_t u = 0;
    for (std::size_t di : train_idx) {
      const Dialog& d = data.corpus.dialogs[di];
      auto& labels = dialog_labels[di];
      labels.assign(d.turns.size(), -1);
      for (std::size_t t = 0; t < d.turns.size(); ++t, ++u) {
        if (!mask[u]) continue;
        auto it = latent.find(*d.turns[t].state);
        if (it == latent.end()) {
          throw ConfigError("gold state '" + *d.turns[t].state + "' has no latent slot");
        }
        labels[t] = static_cast<int>(it->second);
      }
    }
  }

  const bool use_rules = cfg.training.constraints && !data.rules.rules.empty();
  const std::vector<double> weights = template_weights(data.rules);
  AdamConfig adam;
  adam.lr = cfg.training.lr;

  RunArtifacts art;
  std::map<std::string, Tensor> best_params = model.params().snapshot();
  double best_elbo = std::numeric_limits<double>::infinity();
  for (std::size_t epoch = 0; epoch < cfg.training.epochs; ++epoch) {
    std::vector<std::size_t> order = train_idx;
    Rng shuffle_rng = root.split(2).split(epoch);
    shuffle_rng.shuffle(order);
    EpochLog log;
    log.epoch = epoch;
    log.train.mean_truth = 0.0;
    std::vector<double> usage(m.num_states, 0.0);
    std::size_t usage_rows = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.training.batch_size) {
      const std::size_t end = std::min(start + cfg.training.batch_size, order.size());
      std::vector<const Dialog*> ptrs;
      std::vector<int> labels;
      DialogCorpus sub;
      for (std::size_t i = start; i < end; ++i) {
        const Dialog& d = data.corpus.dialogs[order[i]];
        ptrs.push_back(&d);
        const auto& dl = dialog_labels[order[i]];
        labels.insert(labels.end(), dl.begin(), dl.end());
        if (use_rules) sub.dialogs.push_back(d);
      }
      const DialogBatch batch = make_batch(ptrs, data.vocab, m, &labels);
      std::vector<GroundRule> ground_rules;
      BatchConstraints cons;
      if (use_rules) {
        ground_rules = ground_dialogs(data, sub);
        cons.rules = &ground_rules;
        cons.template_weights = weights;
        cons.logic = cfg.logic;
      }
      ad::Graph g;
      BatchNodes nodes =
          model.build_loss(g, batch, data.token_weights, use_rules ? &cons : nullptr, &gumbel_rng);
      g.forward(model.params().bindings());
      if (!nodes.truths.empty()) check_rule_truths(g, nodes.truths);
      const LossBreakdown b = DdVrnn::read_breakdown(g, nodes);
      if (!b.finite()) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) + ": " +
                           b.to_string());
      }
      const Tensor& post = g.value(nodes.posterior);
      for (std::size_t r = 0; r < post.rows(); ++r) {
        for (std::size_t c = 0; c < m.num_states; ++c) usage[c] += post.at(r, c);
      }
      usage_rows += post.rows();
      add_into(log.train, b, 1.0);
      ++batches;
      adam_step(model.params(), g.backward(nodes.total), adam);
    }
    const double inv = 1.0 / static_cast<double>(batches);
    LossBreakdown mean;
    mean.mean_truth = 0.0;
    add_into(mean, log.train, inv);
    mean.ground_rules = log.train.ground_rules;
    log.train = mean;
    double h = 0.0;
    for (double v : usage) {
      const double p = v / static_cast<double>(usage_rows);
      if (p > 0.0) h -= p * std::log(p);
    }
    log.state_entropy = h;
    log.validation_elbo = validation_elbo(model, data, val_idx, cfg.training.batch_size);
    if (log.validation_elbo < best_elbo) {
      best_elbo = log.validation_elbo;
      best_params = model.params().snapshot();
      art.best_epoch = epoch;
    }
    if (cfg.training.verbose) {
      std::cerr << "epoch " << epoch << " " << log.train.to_string()
                << " truth=" << log.train.mean_truth << " val_elbo=" << log.validation_elbo
                << " H=" << log.state_entropy << "\n";
    }
    art.epochs.push_back(log);
  }
  model.params().restore(best_params);

  art.evaluation = evaluate(model, data, cfg);
  art.config_snapshot = cfg.to_json();

  if (!cfg.data.output_dir.empty()) {
    const fs::path out(cfg.data.output_dir);
    fs::create_directories(out);
    art.checkpoint_path = (out / "checkpoint.dsf").string();
    save_model(art.checkpoint_path, model, cfg, data.vocab, data.class_names);
    write_file_atomic((out / "config.json").string(), art.config_snapshot + "\n");
    write_file_atomic((out / "losses.json").string(),
                      epochs_json(art.epochs, art.best_epoch).dump(2) + "\n");
    write_file_atomic((out / "structure.dot").string(),
                      to_dot(art.evaluation.graph, cfg.evaluation.min_prob));
    write_file_atomic((out / "vocab.txt").string(), data.vocab.to_text());
    write_file_atomic((out / "report.json").string(), art.evaluation.report.to_json() + "\n");
  }
  return art;
}

// ---------------------------------------------------------------------------
// Suites

std::string SuiteResult::to_json() const {
  json j;
  json runs_j = json::array();
  for (const SuiteRun& r : runs) {
    json e = {{"cell", r.cell}, {"seed", r.seed},         {"config_hash", r.config_hash},
              {"ok", r.ok},     {"resumed", r.resumed}};
    if (r.ok) {
      e["report"] = json::parse(r.report.to_json());
    } else {
      e["error"] = r.error;
    }
    runs_j.push_back(e);
  }
  json cells_j = json::array();
  for (const SuiteCell& c : cells) {
    json stats = json::object();
    for (const auto& [metric, ms] : c.stats) stats[metric] = {{"mean", ms.first}, {"std", ms.second}};
    cells_j.push_back({{"cell", c.name}, {"runs", c.runs}, {"failures", c.failures}, {"stats", stats}});
  }
  j["cells"] = cells_j;
  j["runs"] = runs_j;
  return j.dump(2);
}

SuiteResult run_suite(const std::string& base_json, const std::string& axes_json,
                      const std::vector<std::uint64_t>& seeds, const std::string& output_dir,
                      const std::string& base_dir) {
  json axes;
  try {
    axes = json::parse(axes_json);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("axes: ") + e.what());
  }
  if (!axes.is_object()) throw ConfigError("axes must be an object of {label: patch} objects");
  if (seeds.empty()) throw ConfigError("suite needs at least one seed");

  struct Cell {
    std::string name;
    std::vector<json> patches;
  };
  std::vector<Cell> cells{{"", {}}};
  for (const auto& [axis, values] : axes.items()) {
    if (!values.is_object() || values.empty()) {
      throw ConfigError("axis '" + axis + "' must map labels to patches");
    }
    std::vector<Cell> next;
    for (const Cell& c : cells) {
      for (const auto& [label, patch] : values.items()) {
        Cell n = c;
        n.name += (n.name.empty() ? "" : ",") + axis + "=" + label;
        n.patches.push_back(patch);
        next.push_back(std::move(n));
      }
    }
    cells = std::move(next);
  }

  SuiteResult result;
  for (const Cell& cell : cells) {
    SuiteCell summary;
    summary.name = cell.name;
    std::map<std::string, std::vector<double>> values;
    for (std::uint64_t seed : seeds) {
      SuiteRun run;
      run.cell = cell.name;
      run.seed = seed;
      try {
        std::string text = base_json;
        for (const json& p : cell.patches) text = merge_patch(text, p.dump());
        json overrides = {{"training", {{"seed", seed}}}, {"data", {{"output_dir", ""}}}};
        text = merge_patch(text, overrides.dump());
        RunConfig cfg = parse_run_config(text, base_dir);
        run.config_hash = cfg.hash();
        const fs::path dir = fs::path(output_dir) / run.config_hash;
        const fs::path report = dir / "report.json";
        if (fs::exists(report)) {
          run.report = MetricsReport::from_json(read_file(report.string()));
          run.resumed = true;
        } else {
          cfg.data.output_dir = dir.string();
          run.report = train(cfg).evaluation.report;
        }
        run.ok = true;
      } catch (const std::exception& e) {
        run.error = e.what();
      }
      ++summary.runs;
      if (!run.ok) {
        ++summary.failures;
      } else {
        const MetricsReport& r = run.report;
        values["ami"].push_back(r.ami);
        values["purity"].push_back(r.purity);
        values["class_balanced_accuracy"].push_back(r.class_balanced_accuracy);
        values["few_shot_mean"].push_back(r.few_shot_mean);
        values["constraint_mean_truth"].push_back(r.constraint_mean_truth);
        values["state_usage_entropy"].push_back(r.state_usage_entropy);
      }
      result.runs.push_back(std::move(run));
    }
    for (const auto& [metric, vs] : values) {
      const double mean = std::accumulate(vs.begin(), vs.end(), 0.0) / static_cast<double>(vs.size());
      double var = 0.0;
      for (double v : vs) var += (v - mean) * (v - mean);
      const double sd = vs.size() > 1 ? std::sqrt(var / static_cast<double>(vs.size() - 1)) : 0.0;
      summary.stats[metric] = {mean, sd};
    }
    result.cells.push_back(std::move(summary));
  }
  if (!output_dir.empty()) {
    fs::create_directories(output_dir);
    write_file_atomic((fs::path(output_dir) / "suite.json").string(), result.to_json() + "\n");
  }
  return result;
}

}  // namespace dsi
