#pragma once

// Reference posteriors. The pure prior admits exact enumeration over the K
// topics; every other prior is handled by self-normalised importance
// sampling with the prior itself as proposal. Log-likelihoods are
// accumulated in log space with a running max shift.

#include <cstdint>
#include <span>
#include <vector>

#include "topicssl/generative.hpp"
#include "topicssl/linalg.hpp"

namespace topicssl {

struct OracleConfig {
  std::size_t n_samples = 200'000;
  // ESS / n_samples below this fraction marks the estimate as low-ESS.
  double resample_threshold = 0.1;
  // When positive, further batches of n_samples are drawn until the ESS
  // reaches min_ess or max_samples have been used.
  std::size_t min_ess = 0;
  std::size_t max_samples = 0;
  std::uint64_t seed = 0;

  friend bool operator==(const OracleConfig&, const OracleConfig&) = default;
};

struct EstimatorInfo {
  enum class Kind { kExact, kSnis };
  Kind kind = Kind::kExact;
  std::size_t n_samples = 0;
  double ess = 0.0;
  bool low_ess = false;
  // Delta-method standard error of each posterior-mean coordinate (zero for
  // exact results).
  std::vector<double> mean_std_error;
};

struct PosteriorTensor {
  MomentTensor tensor;
  EstimatorInfo estimator;
  std::vector<double> mean() const { return tensor.first_marginal(); }
};

// P(w = e_k | x) under the pure prior. Throws DegenerateLikelihoodError when
// no topic can generate every word of x.
ProbVec pure_posterior(const TopicWordMatrix& a, const Document& x);

// E[w^{(x) t} | x]. `stream` selects an independent Monte Carlo stream of
// cfg.seed, typically the document index.
PosteriorTensor posterior_moment_tensor(const TopicWordMatrix& a, const PriorSpec& prior,
                                        const Document& x, int t, const OracleConfig& cfg,
                                        std::uint64_t stream = 0);

// E[w^{(x) t}] under the prior: exact for the pure prior, Monte Carlo
// otherwise.
MomentTensor prior_moment_tensor(const PriorSpec& prior, int t, const OracleConfig& cfg);

// Bayes-optimal reconstruction output (A (x) ... (x) A) vec(W_post), a
// distribution over V^t word tuples.
std::vector<double> ideal_reconstruct_predictor(const TopicWordMatrix& a, const PriorSpec& prior,
                                                const Document& x, int t, const OracleConfig& cfg,
                                                std::uint64_t stream = 0);

// Row of the Kronecker power A^{(x) t} belonging to a word tuple.
std::vector<double> kron_row(const TopicWordMatrix& a, std::span<const std::uint32_t> tuple);

// P(l | x) / P(l) from precomputed moment tensors of order |l|.
double contrastive_g_from_tensors(const TopicWordMatrix& a, std::span<const std::uint32_t> landmark,
                                  const MomentTensor& posterior, const MomentTensor& prior_moments);

// The odds representation of the Bayes-optimal contrastive classifier,
// g(x, l) = P(l | x) / P(l). Requires |l| == t, except under the pure prior
// where landmarks of any length are evaluated exactly.
double ideal_contrastive_g(const TopicWordMatrix& a, const PriorSpec& prior, const Document& x,
                           std::span<const std::uint32_t> landmark, const OracleConfig& cfg,
                           std::uint64_t stream = 0);

}  // namespace topicssl
