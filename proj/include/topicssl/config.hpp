#pragma once

// Experiment configuration. Text format, one `key = value` per line, with
// `[section]` headers and `#` comments:
//
//   seed = 42
//   out = runs/pure
//   [generation]
//   K = 8
//   ...
//
// Unknown sections or keys are errors, so typos do not silently fall back to
// defaults.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "topicssl/generative.hpp"
#include "topicssl/posterior_oracle.hpp"
#include "topicssl/training.hpp"

namespace topicssl {

struct GenerationConfig {
  std::size_t K = 8;
  std::size_t V = 300;
  double lambda = 30.0;
  std::size_t min_length = 2;
  TopicMatrixKind topic_matrix = TopicMatrixKind::kIndependent;
  double alpha = 1.0;               // topic-word Dirichlet Dir(alpha / K)
  std::vector<double> alpha_grid;   // bench sweep; empty means {alpha}
  std::string prior = "pure";       // pure | lda | ctm | pam
  double lda_alpha = 1.0;           // Dir(lda_alpha / K)
  double ctm_diag = 15.0;
  double ctm_rho = 0.99;
  std::size_t pam_super = 4;
  double pam_alpha_super = 0.25;
  double pam_alpha_sub = 30.0;

  friend bool operator==(const GenerationConfig&, const GenerationConfig&) = default;
};

struct ContrastiveConfig {
  std::size_t n_pairs = 50'000;
  std::size_t val_pairs = 5'000;
  std::size_t landmarks = 0;  // 0 means K^t
  double clamp = 1e-6;

  friend bool operator==(const ContrastiveConfig&, const ContrastiveConfig&) = default;
};

struct EvaluationConfig {
  std::size_t n_test_docs = 200;
  std::vector<std::size_t> top_k{1};
  std::vector<std::string> assumed_priors;  // e.g. {"lda", "ctm"}
  std::size_t audit_topic = 0;              // P(w) = w_{audit_topic}
  std::size_t bootstrap = 1000;

  friend bool operator==(const EvaluationConfig&, const EvaluationConfig&) = default;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out = "out";
  GenerationConfig generation;
  TrainConfig training;
  std::size_t checkpoint_every = 0;  // 0: only the final checkpoint
  ContrastiveConfig contrastive;
  OracleConfig oracle;
  EvaluationConfig evaluation;

  // Throws ConfigError on inconsistent values.
  void validate() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

// Per-stage seeds: derive_seed(master, stage) with these stage names.
namespace stage {
inline constexpr std::string_view kTopicMatrix = "topic_matrix";
inline constexpr std::string_view kTrain = "train";
inline constexpr std::string_view kPairs = "pairs";
inline constexpr std::string_view kValPairs = "val_pairs";
inline constexpr std::string_view kLandmarks = "landmarks";
inline constexpr std::string_view kTestDocs = "test_docs";
inline constexpr std::string_view kOracle = "oracle";
inline constexpr std::string_view kEvaluate = "evaluate";
}  // namespace stage

}  // namespace topicssl
