// Command-line driver: generate, train, evaluate, oracle and bench.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "topicssl/config.hpp"
#include "topicssl/error.hpp"
#include "topicssl/experiment.hpp"
#include "topicssl/io.hpp"

namespace {

using namespace topicssl;

// Exit codes.
constexpr int kExitError = 1;
constexpr int kExitConfig = 2;
constexpr int kExitDivergence = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int threads = 0;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "Experiment config file")->required()->check(CLI::ExistingFile);
  app->add_option("--seed", c.seed, "Override the master seed");
  app->add_option("--out", c.out, "Output directory (default: config 'out')");
  app->add_option("--threads", c.threads, "Worker threads (fallback: TOPICSSL_THREADS, then 1)");
}

int resolve_threads(int flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("TOPICSSL_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) return n;
    } catch (const std::exception&) {
    }
    throw ConfigError(std::string("TOPICSSL_THREADS must be a positive integer, got '") + env + "'");
  }
  return 1;
}

ExperimentConfig load(const Common& c) {
  ExperimentConfig cfg = load_config(c.config);
  if (c.seed) cfg.seed = *c.seed;
  if (!c.out.empty()) cfg.out = c.out;
  return cfg;
}

Objective parse_objective(const std::string& s) {
  return s == "contrastive" ? Objective::kContrastive : Objective::kReconstruct;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised topic posterior recovery benchmark"};
  app.require_subcommand(1);

  Common gen_c, train_c, eval_c, oracle_c, bench_c;
  auto* gen = app.add_subcommand("generate", "Sample a topic matrix and test corpus");
  add_common(gen, gen_c);

  std::string objective = "reconstruct";
  const std::vector<std::string> objectives{"reconstruct", "contrastive"};
  bool resume = false;
  auto* train = app.add_subcommand("train", "Train a self-supervised predictor");
  add_common(train, train_c);
  train->add_option("--objective", objective)->check(CLI::IsMember(objectives));
  train->add_flag("--resume", resume, "Continue from <out>/checkpoint.bin");

  bool ideal = false;
  std::string checkpoint;
  auto* eval = app.add_subcommand("evaluate", "Recover posteriors and score them against the oracle");
  add_common(eval, eval_c);
  eval->add_option("--objective", objective)->check(CLI::IsMember(objectives));
  eval->add_flag("--ideal", ideal, "Use the Bayes-optimal predictor instead of a checkpoint");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint (default: <out>/checkpoint.bin)");

  std::string docs;
  auto* oracle = app.add_subcommand("oracle", "Dump reference posteriors for a corpus file");
  add_common(oracle, oracle_c);
  oracle->add_option("--docs", docs, "Corpus file (default: <out>/test_corpus.csv)");

  auto* bench = app.add_subcommand("bench", "Run generate, train and evaluate over the alpha grid");
  add_common(bench, bench_c);
  bench->add_option("--objective", objective)->check(CLI::IsMember(objectives));

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      const auto cfg = load(gen_c);
      cmd_generate(cfg, cfg.out, resolve_threads(gen_c.threads));
      std::cout << "wrote " << cfg.out << "/{topics.csv,test_corpus.csv,metadata.json}\n";
    } else if (train->parsed()) {
      const auto cfg = load(train_c);
      const auto history = cmd_train(cfg, parse_objective(objective), cfg.out, resume,
                                     resolve_threads(train_c.threads), std::cerr);
      std::cout << "trained " << history.size() << " epochs; wrote " << cfg.out << "/checkpoint.bin\n";
    } else if (eval->parsed()) {
      const auto cfg = load(eval_c);
      std::optional<std::filesystem::path> ck;
      if (!ideal) ck = checkpoint.empty() ? std::filesystem::path(cfg.out) / "checkpoint.bin" : std::filesystem::path(checkpoint);
      const auto res = cmd_evaluate(cfg, parse_objective(objective), ck, ideal, cfg.out,
                                    resolve_threads(eval_c.threads));
      std::cout << eval_report_csv(res.rows, 4);
      if (res.audit) {
        std::cout << "audit: lhs " << format_double(res.audit->lhs) << " bound "
                  << format_double(res.audit->bound) << (res.audit->holds ? " holds" : " VIOLATED") << '\n';
      }
    } else if (oracle->parsed()) {
      const auto cfg = load(oracle_c);
      const std::filesystem::path file =
          docs.empty() ? std::filesystem::path(cfg.out) / "test_corpus.csv" : std::filesystem::path(docs);
      cmd_oracle(cfg, file, cfg.out, resolve_threads(oracle_c.threads));
      std::cout << "wrote " << cfg.out << "/oracle.csv\n";
    } else if (bench->parsed()) {
      const auto cfg = load(bench_c);
      cmd_bench(cfg, parse_objective(objective), cfg.out, resolve_threads(bench_c.threads), std::cerr);
      std::cout << "wrote " << cfg.out << "/bench.csv\n";
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << " (history in loss.csv)\n";
    return kExitDivergence;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
