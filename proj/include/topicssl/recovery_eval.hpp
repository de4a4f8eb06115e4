#pragma once

// Posterior recovery from predictor outputs and the metrics built on it:
// TV distance, major-topic accuracy, linear probes, the Pinsker-type check
// and the robustness audit.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topicssl/generative.hpp"
#include "topicssl/linalg.hpp"
#include "topicssl/posterior_oracle.hpp"

namespace topicssl {

struct RecoveredPosterior {
  MomentTensor raw;      // unvec of the pseudo-inverse applied to f
  MomentTensor clipped;  // raw clipped to [0, 1] and renormalised
  // First marginal of the clipped tensor.
  ProbVec mean() const;
};

// Pairs a raw recovered tensor with its clipped, renormalised copy.
RecoveredPosterior clip_recovered(MomentTensor raw);

// Caches A^+ so a test set can be recovered without refactoring A.
class PosteriorRecovery {
 public:
  PosteriorRecovery(const TopicWordMatrix& a, int t);
  // f_out: distribution over V^t tuples.
  RecoveredPosterior recover(std::span<const double> f_out) const;
  int t() const { return t_; }

 private:
  Matrix pinv_;
  std::size_t V_, K_;
  int t_;
};

RecoveredPosterior recover_posterior(const TopicWordMatrix& a, std::span<const double> f_out, int t);

// Indices of the k largest entries; ties go to the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> v, std::size_t k);

// Mean over documents of |top_k(recovered) & top_k(truth)| / k.
double major_topic_accuracy(std::span<const std::vector<double>> recovered,
                            std::span<const std::vector<double>> truth, std::size_t top_k);

struct MeanCi {
  double mean = 0.0;
  double ci95 = 0.0;  // 1.96 s / sqrt(N), s the sample standard deviation
};
MeanCi mean_ci95(std::span<const double> xs);

// Least-squares probe theta with representations as rows. ridge == 0 gives
// the minimum-norm solution, which stays exact when the representations span
// fewer dimensions than their length (ideal outputs live in a K^t-dim
// subspace).
struct ProbeFit {
  std::vector<double> theta;
  double train_residual = 0.0;  // max |x_i theta - y_i| on the fitting set
  std::size_t rank = 0;
};
ProbeFit linear_probe_fit(const Matrix& reps, std::span<const double> targets, double ridge);
double probe_residual(const ProbeFit& fit, const Matrix& reps, std::span<const double> targets);

enum class KlDirection { kForward, kReverse };  // KL(p || p*) or KL(p* || p)

double kl_divergence(std::span<const double> p, std::span<const double> q);

struct PinskerResult {
  double lhs = 0.0;  // |B p - B p*|_1
  double rhs = 0.0;  // kappa(B) sqrt(2 KL)
  double kl = 0.0;
  bool holds = false;
  bool vacuous = false;  // KL infinite
};
PinskerResult pinsker_check(std::span<const double> p, std::span<const double> p_star, const Matrix& b,
                            KlDirection dir = KlDirection::kForward);

// Polynomial of degree <= t in w as coefficients on vec(w^{(x) t}).
struct PolynomialTarget {
  int t = 1;
  std::size_t K = 0;
  std::vector<double> beta;  // length K^t

  // prod_i w_{z_i} for the given topic indices (|z| <= t). Lower degrees are
  // padded with sum_j w_j = 1.
  static PolynomialTarget monomial(std::size_t K, int t, std::span<const std::size_t> z);
  double evaluate(const MomentTensor& moments) const;
  double norm() const;
};

struct RobustnessConfig {
  std::size_t bootstrap = 1000;
  std::uint64_t seed = 0;
  OracleConfig oracle;
  int threads = 1;
};

struct RobustnessReport {
  double epsilon = 0.0;      // mean KL(f*(x) || f(x)) over the test docs
  double epsilon_se = 0.0;   // standard error of that mean
  double beta_norm = 0.0;
  double kappa = 0.0;        // kappa(A^+)
  int t = 1;
  double bound = 0.0;        // 2 |beta|^2 kappa^{2t} epsilon
  double lhs = 0.0;          // mean (E[P(w)|x] - theta^T f(x))^2
  double lhs_se = 0.0;
  bool holds = false;
  double bootstrap_hold_rate = 0.0;
  std::vector<double> per_doc_lhs, per_doc_epsilon;
};

// f_outputs[i] is the trained predictor's distribution over V^t for
// test_docs[i]. theta = (A^+ (x) ... (x) A^+)^T beta is applied to the raw
// outputs, without clipping.
RobustnessReport robustness_audit(const TopicWordMatrix& a, const PriorSpec& prior,
                                  std::span<const std::vector<double>> f_outputs,
                                  const PolynomialTarget& poly, std::span<const Document> test_docs,
                                  const RobustnessConfig& cfg);

struct EvalReport {
  std::string method;
  std::string prior_true;
  std::string prior_assumed;
  double alpha = 0.0;
  std::size_t n_docs = 0;
  std::vector<double> tv;
  double tv_mean = 0.0, tv_ci95 = 0.0;
  std::size_t topk = 1;
  double acc_mean = 0.0, acc_ci95 = 0.0;
  std::uint64_t seed = 0;
  double min_ess = 0.0;  // smallest ESS among the method's oracle calls (0 for exact/SSL)
};

struct BenchmarkConfig {
  std::vector<std::size_t> top_k{1};
  double alpha = 0.0;
  std::uint64_t seed = 0;
  OracleConfig oracle;
  int threads = 1;
};

struct BenchmarkResult {
  std::vector<EvalReport> rows;
  std::vector<std::vector<double>> truth;  // reference posterior means
  double truth_min_ess = 0.0;              // 0 when the reference is exact
};

// Reference: posterior means under true_prior. Rows: "ssl" from ssl_means
// (when non-empty) and "oracle" for each assumed prior, each repeated per
// top-k value.
BenchmarkResult misspecification_benchmark(const TopicWordMatrix& a, const PriorSpec& true_prior,
                                           std::span<const PriorSpec> assumed_priors,
                                           std::span<const std::vector<double>> ssl_means,
                                           std::span<const Document> test_docs,
                                           const BenchmarkConfig& cfg);

std::string eval_report_csv(std::span<const EvalReport> rows, int digits = 10);
std::string robustness_csv(std::span<const RobustnessReport> rows);

}  // namespace topicssl
