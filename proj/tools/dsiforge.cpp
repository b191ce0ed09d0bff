#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dsiforge/checkpoint.hpp"
#include "dsiforge/corpus.hpp"
#include "dsiforge/datagen.hpp"
#include "dsiforge/error.hpp"
#include "dsiforge/gradcheck.hpp"
#include "dsiforge/pipeline.hpp"
#include "dsiforge/resources.hpp"

namespace {

namespace fs = std::filesystem;

template <typename T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(item, &used);
      if (used != item.size()) throw std::invalid_argument(item);
      out.push_back(static_cast<T>(v));
    } catch (const std::logic_error&) {
      throw dsi::ConfigError(std::string("bad ") + what + " entry '" + item + "'");
    }
  }
  if (out.empty()) throw dsi::ConfigError(std::string("empty ") + what + " list");
  return out;
}

void emit(const std::string& out, const std::string& text) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    dsi::write_file_atomic(out, text);
  }
}

int cmd_generate(const std::string& config, std::size_t n, const std::string& out,
                 std::optional<std::uint64_t> seed) {
  dsi::GeneratorConfig cfg = dsi::parse_generator_config(dsi::read_resource(config));
  if (seed) cfg.seed = *seed;
  const dsi::DialogCorpus corpus = dsi::generate_corpus(cfg, n);
  emit(out, dsi::corpus_to_jsonl(corpus));
  std::cerr << "generated " << corpus.dialogs.size() << " dialogs, "
            << corpus.utterance_count() << " utterances, hash "
            << dsi::hex64(dsi::corpus_hash(corpus)) << "\n";
  return 0;
}

int cmd_train(const std::string& config, const std::string& out_dir, bool verbose) {
  dsi::RunConfig cfg = dsi::load_run_config(config);
  if (!out_dir.empty()) cfg.data.output_dir = fs::absolute(out_dir).string();
  if (verbose) cfg.training.verbose = true;
  const dsi::RunArtifacts art = dsi::train(cfg);
  std::cout << art.evaluation.report.to_json() << "\n";
  if (!art.checkpoint_path.empty()) std::cerr << "checkpoint: " << art.checkpoint_path << "\n";
  return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& corpus, const std::string& out) {
  const dsi::LoadedModel model = dsi::load_model(checkpoint);
  const dsi::EvaluationResult res = dsi::evaluate(model, dsi::import_corpus(corpus));
  emit(out, res.report.to_json() + "\n");
  return 0;
}

int cmd_probe(const std::string& checkpoint, const std::string& corpus,
              const std::string& shots) {
  dsi::LoadedModel model = dsi::load_model(checkpoint);
  model.config.evaluation.shots = parse_list<std::size_t>(shots, "shots");
  const dsi::MetricsReport r = dsi::evaluate(model, dsi::import_corpus(corpus)).report;
  std::cout << std::fixed << std::setprecision(4);
  std::cout << "full act " << r.probe_act_full << "\n";
  std::cout << "full domain " << r.probe_domain_full << "\n";
  for (const auto& [k, acc] : r.few_shot) std::cout << k << "-shot act " << acc << "\n";
  return 0;
}

int cmd_export(const std::string& checkpoint, const std::string& corpus, double min_prob,
               const std::string& out) {
  const dsi::LoadedModel model = dsi::load_model(checkpoint);
  const dsi::EvaluationResult res = dsi::evaluate(model, dsi::import_corpus(corpus));
  emit(out, dsi::to_dot(res.graph, min_prob));
  return 0;
}

int cmd_gradcheck() {
  bool ok = true;
  std::cout << std::scientific << std::setprecision(3);
  for (const dsi::GradcheckResult& r : dsi::run_gradchecks()) {
    std::cout << (r.passed() ? "ok   " : "FAIL ") << std::left << std::setw(18) << r.name
              << " rel_err=" << r.error << " tol=" << r.tolerance << "\n";
    ok = ok && r.passed();
  }
  const double identity = dsi::log_relaxation_identity_error(1.0);
  const bool id_ok = identity < 1e-6;
  std::cout << (id_ok ? "ok   " : "FAIL ") << std::left << std::setw(18) << "log_relaxation"
            << " abs_err=" << identity << " tol=1.000e-06\n";
  if (!(ok && id_ok)) throw dsi::NumericError("gradient check failed");
  return 0;
}

int cmd_suite(const std::string& config, const std::string& axes, const std::string& seeds,
              const std::string& out_dir) {
  const std::string base_dir = fs::absolute(config).parent_path().string();
  const dsi::SuiteResult res =
      dsi::run_suite(dsi::read_file(config), dsi::read_file(axes),
                     parse_list<std::uint64_t>(seeds, "seeds"), out_dir, base_dir);
  std::cout << std::fixed << std::setprecision(4);
  for (const dsi::SuiteCell& c : res.cells) {
    std::cout << (c.name.empty() ? "(base)" : c.name) << ": runs=" << c.runs
              << " failures=" << c.failures;
    if (auto it = c.stats.find("ami"); it != c.stats.end()) {
      std::cout << " ami=" << it->second.first << "+-" << it->second.second;
    }
    std::cout << "\n";
  }
  for (const dsi::SuiteRun& r : res.runs) {
    if (!r.ok) std::cerr << "run " << r.cell << " seed " << r.seed << " failed: " << r.error << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure induction for dialogs with soft-logic constraints"};
  app.require_subcommand(1);

  std::string config, out, checkpoint, corpus, axes, out_dir;
  std::string suite_dir = "suite_runs", gen_config = "builtin:multiwoz_like.json";
  std::string shots = "1,5,10", seeds = "0,1,2";
  std::size_t n = 10000;
  double min_prob = 0.0005;
  bool verbose = false;
  std::optional<std::uint64_t> seed;

  auto* gen = app.add_subcommand("generate", "Sample a synthetic corpus");
  gen->add_option("--config", gen_config, "Generator JSON or builtin:<name>")
      ->capture_default_str();
  gen->add_option("--n", n, "Number of dialogs")->check(CLI::PositiveNumber);
  gen->add_option("--seed", seed, "Override the generator seed");
  gen->add_option("--out", out, "Output JSONL (stdout if omitted)");

  auto* tr = app.add_subcommand("train", "Train a model from a run configuration");
  tr->add_option("--config", config, "Run configuration JSON")->required();
  tr->add_option("--out-dir", out_dir, "Override data.output_dir");
  tr->add_flag("--verbose", verbose, "Log every epoch");

  auto* ev = app.add_subcommand("eval", "Score a checkpoint on a labeled corpus");
  ev->add_option("--checkpoint", checkpoint)->required();
  ev->add_option("--corpus", corpus)->required();
  ev->add_option("--out", out, "Report JSON (stdout if omitted)");

  auto* pr = app.add_subcommand("probe", "Linear probes on the model's dialog features");
  pr->add_option("--checkpoint", checkpoint)->required();
  pr->add_option("--corpus", corpus)->required();
  pr->add_option("--shots", shots, "Comma-separated labels per class");

  auto* ex = app.add_subcommand("export-structure", "Write the induced state graph as DOT");
  ex->add_option("--checkpoint", checkpoint)->required();
  ex->add_option("--corpus", corpus)->required();
  ex->add_option("--min-prob", min_prob)->check(CLI::Range(0.0, 1.0));
  ex->add_option("--out", out, "DOT file (stdout if omitted)");

  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks");

  auto* su = app.add_subcommand("suite", "Run a grid of configurations over seeds");
  su->add_option("--config", config, "Base run configuration")->required();
  su->add_option("--axes", axes, "Axes JSON {axis: {label: patch}}")->required();
  su->add_option("--seeds", seeds, "Comma-separated seeds");
  su->add_option("--out-dir", suite_dir, "Run directory root")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(dsi::ExitCode::kConfig);
  }

  try {
    if (*gen) return cmd_generate(gen_config, n, out, seed);
    if (*tr) return cmd_train(config, out_dir, verbose);
    if (*ev) return cmd_eval(checkpoint, corpus, out);
    if (*pr) return cmd_probe(checkpoint, corpus, shots);
    if (*ex) return cmd_export(checkpoint, corpus, min_prob, out);
    if (*gc) return cmd_gradcheck();
    if (*su) return cmd_suite(config, axes, seeds, suite_dir);
  } catch (const dsi::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(dsi::ExitCode::kNumeric);
  }
  return 0;
}
