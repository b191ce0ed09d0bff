#include <benchmark/benchmark.h>

#include "dsiforge/autodiff.hpp"
#include "dsiforge/datagen.hpp"
#include "dsiforge/grounding.hpp"
#include "dsiforge/metrics.hpp"
#include "dsiforge/model.hpp"
#include "dsiforge/resources.hpp"
#include "dsiforge/rng.hpp"
#include "dsiforge/rules.hpp"

namespace {

using namespace dsi;

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Tensor t({r, c});
  for (double& v : t.data) v = rng.normal();
  return t;
}

void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_matrix(n, n, rng), b = random_matrix(n, n, rng);
  ad::Bindings bind;
  bind.bind("a", a);
  bind.bind("b", b);
  for (auto _ : state) {
    ad::Graph g;
    auto y = g.reduce_sum(g.tanh(g.matmul(g.parameter("a", {n, n}), g.parameter("b", {n, n}))));
    g.forward(bind);
    benchmark::DoNotOptimize(g.backward(y));
  }
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_MatmulForwardBackward)->RangeMultiplier(2)->Range(16, 128)->Complexity();

void BM_SoftmaxRows(benchmark::State& state) {
  Rng rng(2);
  const Tensor x = random_matrix(static_cast<std::size_t>(state.range(0)), 500, rng);
  for (auto _ : state) {
    ad::Graph g;
    auto y = g.log_softmax(g.constant(x));
    g.forward({});
    benchmark::DoNotOptimize(g.value(y).data.data());
  }
}
BENCHMARK(BM_SoftmaxRows)->Arg(32)->Arg(256);

struct BatchFixture {
  DialogCorpus corpus;
  Vocabulary vocab;
  ModelConfig cfg;
  std::vector<double> weights;
  std::vector<const Dialog*> dialogs;
  std::vector<std::string> classes;
  RuleSet rules;
  std::vector<GroundRule> grounded;
  PredicateSchema schema;
  Lexicons lexicons = default_lexicons();

  explicit BatchFixture(std::size_t n) {
    const GeneratorConfig gen = builtin_multiwoz_like_config();
    corpus = generate_corpus(gen, n);
    classes = gen.graph.states;
    vocab = Vocabulary::build(corpus, 500);
    cfg.vocab_size = vocab.size();
    weights = tfidf_weights(corpus, vocab, 0.5);
    for (const Dialog& d : corpus.dialogs) dialogs.push_back(&d);
    std::vector<std::string> keys;
    for (const auto& [k, v] : lexicons) keys.push_back(k);
    schema = PredicateSchema::standard(keys);
    std::string text = read_resource("builtin:multiwoz_rules.psl");
    for (std::size_t p; (p = text.find("init_request")) != std::string::npos;) {
      text.replace(p, 12, "initial_request");
    }
    rules = parse_ruleset(text, schema);
    grounded = ground(rules, build_observations(corpus, classes, lexicons), schema);
  }
};

void BM_BatchLossStep(benchmark::State& state) {
  BatchFixture f(32);
  Rng init(3);
  DdVrnn model(f.cfg, init);
  const DialogBatch batch = make_batch(f.dialogs, f.vocab, f.cfg);
  BatchConstraints cons;
  cons.rules = &f.grounded;
  cons.template_weights.assign(f.rules.rules.size(), 1.0);
  const bool constrained = state.range(0) != 0;
  for (auto _ : state) {
    ad::Graph g;
    const BatchNodes nodes =
        model.build_loss(g, batch, f.weights, constrained ? &cons : nullptr, nullptr);
    g.forward(model.params().bindings());
    benchmark::DoNotOptimize(g.backward(nodes.total));
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.utterance_count()));
}
BENCHMARK(BM_BatchLossStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_Grounding(benchmark::State& state) {
  BatchFixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    const ObservationStore obs = build_observations(f.corpus, f.classes, f.lexicons);
    benchmark::DoNotOptimize(ground(f.rules, obs, f.schema));
  }
}
BENCHMARK(BM_Grounding)->Arg(32)->Arg(256)->Unit(benchmark::kMillisecond);

void BM_Ami(benchmark::State& state) {
  Rng rng(4);
  Labels a(static_cast<std::size_t>(state.range(0))), b(a.size());
  for (auto& x : a) x = rng.uniform_int(10);
  for (auto& x : b) x = rng.uniform_int(9);
  for (auto _ : state) benchmark::DoNotOptimize(ami(a, b));
}
BENCHMARK(BM_Ami)->Arg(1000)->Arg(20000);

void BM_GenerateCorpus(benchmark::State& state) {
  const GeneratorConfig gen = builtin_multiwoz_like_config();
  for (auto _ : state) {
    benchmark::DoNotOptimize(generate_corpus(gen, static_cast<std::size_t>(state.range(0))));
  }
}
BENCHMARK(BM_GenerateCorpus)->Arg(2000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
