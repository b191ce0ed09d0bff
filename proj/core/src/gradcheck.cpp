#include "dsiforge/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "dsiforge/autodiff.hpp"
#include "dsiforge/datagen.hpp"
#include "dsiforge/grounding.hpp"
#include "dsiforge/model.hpp"
#include "dsiforge/rng.hpp"
#include "dsiforge/rules.hpp"
#include "dsiforge/softlogic.hpp"

#include "builtin_data.hpp"

namespace dsi {

namespace {

constexpr double kOpTolerance = 1e-4;
constexpr double kModelTolerance = 1e-3;
constexpr double kStep = 1e-6;

using ad::Graph;
using ad::NodeId;

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t(std::move(shape));
  for (double& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

/// Builds a graph over the named leaves, reduces it to a scalar with a fixed
/// random projection so every output element carries a distinct weight.
struct OpCase {
  std::string name;
  std::map<std::string, Tensor> leaves;
  std::function<NodeId(Graph&, const std::map<std::string, NodeId>&)> build;
};

double check_case(const OpCase& c, Rng& rng) {
  Graph g;
  std::map<std::string, NodeId> ids;
  ad::Bindings bindings;
  for (const auto& [name, value] : c.leaves) {
    ids[name] = g.parameter(name, value.shape);
    bindings.bind(name, value);
  }
  NodeId out = c.build(g, ids);
  g.forward(bindings);
  Tensor proj = random_tensor(g.value(out).shape, rng, 0.5, 1.5);
  NodeId root = g.reduce_sum(g.mul(out, g.constant(std::move(proj))));
  return ad::finite_diff_check(g, bindings, root, kStep);
}

std::vector<OpCase> op_cases(Rng& rng) {
  auto m = [&](std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
    return random_tensor({r, c}, rng, lo, hi);
  };
  std::vector<OpCase> cases;
  auto binary = [&](std::string name, auto fn, double lo, double hi) {
    cases.push_back({std::move(name),
                     {{"a", m(3, 4)}, {"b", m(3, 4, lo, hi)}},
                     [fn](Graph& g, const auto& x) { return fn(g, x.at("a"), x.at("b")); }});
  };
  auto unary = [&](std::string name, auto fn, double lo, double hi) {
    cases.push_back({std::move(name),
                     {{"x", m(3, 4, lo, hi)}},
                     [fn](Graph& g, const auto& x) { return fn(g, x.at("x")); }});
  };
  binary("add", [](Graph& g, NodeId a, NodeId b) { return g.add(a, b); }, -1, 1);
  binary("sub", [](Graph& g, NodeId a, NodeId b) { return g.sub(a, b); }, -1, 1);
  binary("mul", [](Graph& g, NodeId a, NodeId b) { return g.mul(a, b); }, -1, 1);
  binary("div", [](Graph& g, NodeId a, NodeId b) { return g.div(a, b); }, 0.5, 2.0);
  cases.push_back({"scalar_broadcast",
                   {{"a", m(3, 4)}, {"s", Tensor::scalar(0.7)}},
                   [](Graph& g, const auto& x) {
                     return g.div(g.mul(x.at("a"), x.at("s")), g.add(x.at("s"), g.scalar(1.0)));
                   }});
  cases.push_back({"matmul",
                   {{"a", m(3, 4)}, {"b", m(4, 2)}},
                   [](Graph& g, const auto& x) { return g.matmul(x.at("a"), x.at("b")); }});
  cases.push_back({"concat_cols",
                   {{"a", m(3, 2)}, {"b", m(3, 4)}},
                   [](Graph& g, const auto& x) { return g.concat({x.at("a"), x.at("b")}, 1); }});
  cases.push_back({"concat_rows",
                   {{"a", m(2, 3)}, {"b", m(1, 3)}},
                   [](Graph& g, const auto& x) { return g.concat({x.at("a"), x.at("b")}, 0); }});
  cases.push_back({"embedding",
                   {{"table", m(5, 3)}},
                   [](Graph& g, const auto& x) {
                     return g.embedding(x.at("table"), {4, 0, 4, 2});
                   }});
  unary("tanh", [](Graph& g, NodeId x) { return g.tanh(x); }, -2, 2);
  unary("sigmoid", [](Graph& g, NodeId x) { return g.sigmoid(x); }, -2, 2);
  unary("exp", [](Graph& g, NodeId x) { return g.exp(x); }, -1, 1);
  unary("log", [](Graph& g, NodeId x) { return g.log(x); }, 0.2, 2.0);
  // Kinks are avoided: no sample lies within 0.05 of the threshold.
  cases.push_back({"max_scalar",
                   {{"x", Tensor::matrix(2, 3, {-0.8, 0.3, 0.9, -0.2, 0.6, -0.5})}},
                   [](Graph& g, const auto& x) { return g.max_scalar(x.at("x"), 0.1); }});
  cases.push_back({"min_scalar",
                   {{"x", Tensor::matrix(2, 3, {-0.8, 0.3, 0.9, -0.2, 0.6, -0.5})}},
                   [](Graph& g, const auto& x) { return g.min_scalar(x.at("x"), 0.1); }});
  unary("softmax", [](Graph& g, NodeId x) { return g.softmax(x); }, -2, 2);
  unary("log_softmax", [](Graph& g, NodeId x) { return g.log_softmax(x); }, -2, 2);
  unary("reduce_sum", [](Graph& g, NodeId x) { return g.reduce_sum(x); }, -1, 1);
  unary("reduce_mean", [](Graph& g, NodeId x) { return g.reduce_mean(x); }, -1, 1);
  cases.push_back({"elem_max",
                   {{"a", Tensor::matrix(2, 2, {0.1, 0.9, -0.4, 0.5})},
                    {"b", Tensor::matrix(2, 2, {0.6, 0.2, -0.9, 0.8})}},
                   [](Graph& g, const auto& x) { return g.elem_max(x.at("a"), x.at("b")); }});
  cases.push_back({"elem_min",
                   {{"a", Tensor::matrix(2, 2, {0.1, 0.9, -0.4, 0.5})},
                    {"b", Tensor::matrix(2, 2, {0.6, 0.2, -0.9, 0.8})}},
                   [](Graph& g, const auto& x) { return g.elem_min(x.at("a"), x.at("b")); }});
  cases.push_back({"gather",
                   {{"x", m(3, 4)}},
                   [](Graph& g, const auto& x) {
                     return g.gather(x.at("x"), {{0, 1}, {2, 3}, {0, 1}, {1, 0}});
                   }});
  cases.push_back({"slice_rows",
                   {{"x", m(4, 3)}},
                   [](Graph& g, const auto& x) { return g.slice_rows(x.at("x"), 1, 2); }});
  return cases;
}

double check_tiny_model() {
  GeneratorConfig gen = parse_generator_config(data::kChainConfig);
  gen.seed = 7;
  const DialogCorpus corpus = generate_corpus(gen, 3);
  const Vocabulary vocab = Vocabulary::build(corpus);
  ModelConfig cfg;
  cfg.num_states = 3;
  cfg.vocab_size = vocab.size();
  cfg.embed_dim = 3;
  cfg.encoder_dim = 3;
  cfg.dialog_dim = 3;
  cfg.decoder_dim = 3;
  cfg.bow_dim = 3;
  Rng init(11);
  DdVrnn model(cfg, init);

  const std::vector<std::string> classes = gen.graph.states;
  const Lexicons lex = default_lexicons();
  std::vector<std::string> keys;
  for (const auto& [k, v] : lex) keys.push_back(k);
  const PredicateSchema schema = PredicateSchema::standard(keys);
  const RuleSet rules = parse_ruleset(data::kChainRules, schema);
  const std::vector<GroundRule> grounded =
      ground(rules, build_observations(corpus, classes, lex), schema);
  BatchConstraints cons;
  cons.rules = &grounded;
  for (const RuleTemplate& r : rules.rules) cons.template_weights.push_back(r.weight);

  std::vector<const Dialog*> ptrs;
  for (const Dialog& d : corpus.dialogs) ptrs.push_back(&d);
  std::vector<int> labels(corpus.utterance_count(), -1);
  labels[0] = 0;
  const DialogBatch batch = make_batch(ptrs, vocab, cfg, &labels);
  const std::vector<double> weights = tfidf_weights(corpus, vocab, 0.5);

  ad::Graph g;
  const BatchNodes nodes = model.build_loss(g, batch, weights, &cons, nullptr);
  return ad::finite_diff_check(g, model.params().bindings(), nodes.total, kStep);
}

}  // namespace

std::vector<GradcheckResult> run_gradchecks() {
  Rng rng(2024);
  std::vector<GradcheckResult> out;
  for (const OpCase& c : op_cases(rng)) {
    out.push_back({c.name, check_case(c, rng), kOpTolerance});
  }
  out.push_back({"tiny_batch_loss", check_tiny_model(), kModelTolerance});
  return out;
}

double log_relaxation_identity_error(double lambda) {
  LogicConfig cfg;
  cfg.relaxation = Relaxation::kLog;
  double worst = 0.0;
  for (int i = 0; i <= 99; ++i) {
    const double t = 0.01 + (1.0 - 0.01) * i / 99.0;
    ad::Graph g;
    const Tensor value = Tensor::scalar(t);
    ad::Bindings b;
    b.bind("t", value);
    const RuleTruth truth{0, g.parameter("t", {}), lambda};
    const NodeId loss = constraint_loss(g, {truth}, cfg);
    g.forward(b);
    const double d = g.backward(loss).at("t").item();
    worst = std::max(worst, std::abs(std::abs(d) * t - lambda));
  }
  return worst;
}

}  // namespace dsi
