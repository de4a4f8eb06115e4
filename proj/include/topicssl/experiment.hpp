#pragma once

// End-to-end pipelines behind the command-line tool. Every stage derives its
// seed from the master seed (see config.hpp), so stages can be rerun alone.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "topicssl/config.hpp"
#include "topicssl/contrastive.hpp"
#include "topicssl/generative.hpp"
#include "topicssl/recovery_eval.hpp"
#include "topicssl/training.hpp"

namespace topicssl {

TopicWordMatrix make_topic_matrix(const ExperimentConfig& cfg);
// name: pure | lda | ctm | pam, parameterised from cfg.generation.
PriorSpec make_prior(const GenerationConfig& gen, const std::string& name);
GenConfig make_gen_config(const ExperimentConfig& cfg);
TrainConfig make_train_config(const ExperimentConfig& cfg, int threads);
OracleConfig make_oracle_config(const ExperimentConfig& cfg);
std::vector<Document> make_test_docs(const ExperimentConfig& cfg, const TopicWordMatrix& a,
                                     const PriorSpec& prior, int threads);

// Writes topics.csv, test_corpus.csv and metadata.json (including kappa(A^+)
// and the rank check) under out_dir.
void cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& out_dir, int threads);

// Trains and writes checkpoint.bin (with optimiser state) and loss.csv, plus
// checkpoints/epoch_NNNN.bin every cfg.checkpoint_every epochs. With
// `resume`, continues from out_dir/checkpoint.bin. On divergence loss.csv is
// still written before the DivergenceError propagates.
std::vector<EpochRecord> cmd_train(const ExperimentConfig& cfg, Objective objective,
                                   const std::filesystem::path& out_dir, bool resume, int threads,
                                   std::ostream& log);

struct EvaluateResult {
  std::vector<EvalReport> rows;
  std::optional<RobustnessReport> audit;  // reconstruction objective only
  BenchmarkResult benchmark;
  // Recovered (clipped) posterior means of the SSL method, one per test doc.
  std::vector<std::vector<double>> ssl_means;
};

// Evaluates a checkpoint, or with `ideal` the Bayes-optimal predictor of the
// given objective. Writes eval.csv and (reconstruction) robustness.csv.
EvaluateResult cmd_evaluate(const ExperimentConfig& cfg, Objective objective,
                            const std::optional<std::filesystem::path>& checkpoint, bool ideal,
                            const std::filesystem::path& out_dir, int threads);

// Posterior means (and t = 2 tensors) for every document of a corpus file,
// with estimator diagnostics. Writes oracle.csv.
void cmd_oracle(const ExperimentConfig& cfg, const std::filesystem::path& corpus_file,
                const std::filesystem::path& out_dir, int threads);
std::string oracle_csv(const std::vector<PosteriorTensor>& posts, int t);

// generate + train + evaluate for each alpha of the grid under out_dir/alpha_<a>,
// then the concatenated bench.csv.
void cmd_bench(const ExperimentConfig& cfg, Objective objective, const std::filesystem::path& out_dir,
               int threads, std::ostream& log);

}  // namespace topicssl
