#pragma once

// Contrastive self-supervision: pair generation, the squared-loss classifier,
// the odds (landmark) representation, recovery through landmarks and the
// kernel-regression view where downstream documents act as their own
// landmarks.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topicssl/generative.hpp"
#include "topicssl/mlp.hpp"
#include "topicssl/posterior_oracle.hpp"
#include "topicssl/training.hpp"

namespace topicssl {

struct ContrastivePair {
  Document x;
  std::vector<std::uint32_t> x_prime;  // length t
  int label = 0;                       // 1: x' drawn from A w, 0: from A w'
  TopicProportions w;
  std::optional<TopicProportions> w_prime;  // negatives only
  std::size_t rejections = 0;               // redraws of w' that equalled w
};

// A negative draw w' identical to w is rejected; after this many consecutive
// rejections (a prior with a single atom) w' = w is accepted.
inline constexpr std::size_t kMaxNegativeRejections = 1000;

// Pair i uses stream i of `seed`. Documents follow gen (lambda, min_length).
std::vector<ContrastivePair> make_pairs(const TopicWordMatrix& a, const PriorSpec& prior, int t,
                                        std::size_t n_pairs, const GenConfig& gen,
                                        std::uint64_t seed, int threads = 1);

// Classifier input: normalized counts of x followed by t one-hot V-vectors.
Eigen::MatrixXd encode_pairs(std::span<const Document* const> xs,
                             std::span<const std::vector<std::uint32_t>* const> primes, std::size_t V);

MlpModel make_contrastive_model(std::size_t V, const TrainConfig& cfg);

// Classifier output f(x, x') in (0, 1).
double classify(const MlpModel& model, const Document& x, std::span<const std::uint32_t> x_prime);

struct ContrastiveLoss {
  double loss = 0.0;  // mean squared error
  Eigen::VectorXd grad;
};
ContrastiveLoss contrastive_loss_and_grad(const MlpModel& model, std::span<const ContrastivePair> batch);
double contrastive_mean_loss(const MlpModel& model, std::span<const ContrastivePair> pairs);

// Trains on a fixed pair set, shuffled each epoch. The plateau schedule
// watches `val` when given, else the training loss.
class ContrastiveTrainer {
 public:
  ContrastiveTrainer(MlpModel& model, std::span<const ContrastivePair> pairs,
                     std::span<const ContrastivePair> val, const TrainConfig& cfg,
                     std::optional<TrainState> resume = std::nullopt);
  EpochRecord run_epoch();
  bool done() const { return state_.epochs_done >= cfg_.epochs; }
  TrainState state() const;

 private:
  MlpModel& model_;
  std::span<const ContrastivePair> pairs_;
  std::span<const ContrastivePair> val_;
  TrainConfig cfg_;
  TrainState state_;
  AmsGrad opt_;
};

std::vector<EpochRecord> train_contrastive(MlpModel& model, std::span<const ContrastivePair> pairs,
                                           const TrainConfig& cfg,
                                           std::span<const ContrastivePair> val = {});

// Bayes-optimal P(y = 1 | x, x') under make_pairs, by enumeration over topics.
// Pure prior only: there the rejection of w' = w makes the negative
// distribution (K P(x') - P(x'|x)) / (K - 1) instead of P(x').
double pure_bayes_classifier(const TopicWordMatrix& a, const Document& x,
                             std::span<const std::uint32_t> x_prime);

// Odds map f / (1 - f) after clamping f to [clamp, 1 - clamp].
double g_transform(double f, double clamp = 1e-6);

// A classifier trained on pure-prior pairs estimates the odds against the
// rejected negative distribution. This maps those odds back to
// P(x'|x) / P(x'). Identity for K = 1.
double pure_rejection_to_ratio(double g, std::size_t K);

struct LandmarkSet {
  int t = 1;
  std::vector<std::vector<std::uint32_t>> landmarks;
  std::vector<double> marginals;  // P(l_i)
  Matrix a_tilde;                 // rows of A^{(x) t} at the landmarks, m x K^t
  Matrix a_tilde_pinv;

  std::size_t size() const { return landmarks.size(); }
};

// m distinct tuples drawn from the model's t-word marginal (all V^t tuples
// when m == V^t), with analytic marginals from the prior moments. When
// m >= K^t the rank of A~ is checked and the draw repeated up to 10 times.
LandmarkSet build_landmarks(const TopicWordMatrix& a, const PriorSpec& prior, int t, std::size_t m,
                            const OracleConfig& cfg, std::uint64_t seed);
// Landmarks given explicitly (e.g. to compare subsets).
LandmarkSet make_landmark_set(const TopicWordMatrix& a, const PriorSpec& prior,
                              std::vector<std::vector<std::uint32_t>> tuples, const OracleConfig& cfg);

// g(x, l_i) for every landmark, from a trained classifier or from the oracle.
std::vector<double> landmark_representation(const MlpModel& model, const LandmarkSet& lm,
                                            const Document& x, double clamp = 1e-6);
std::vector<double> ideal_landmark_representation(const TopicWordMatrix& a, const PriorSpec& prior,
                                                  const LandmarkSet& lm, const Document& x,
                                                  const OracleConfig& cfg, std::uint64_t stream = 0);

// vec(W_post) = pinv(A~) diag(P(l)) g, reshaped (and symmetrized for t = 2).
MomentTensor recover_from_landmarks(const LandmarkSet& lm, std::span<const double> g);

// G[i][j] = g(x_i, x_j) with the documents themselves as landmarks (ideal g).
Matrix build_kernel_matrix(const TopicWordMatrix& a, const PriorSpec& prior,
                           std::span<const Document> docs, const OracleConfig& cfg);

// theta minimising |y - G theta|^2 + ridge |theta|^2. At ridge 0 a
// rank-deficient G raises ConditioningError.
std::vector<double> kernel_regression(const Matrix& g, std::span<const double> targets, double ridge);

// CSV `landmark_id,word_1..word_t,marginal` and `doc_id,g_1..g_m`.
std::string landmarks_csv(const LandmarkSet& lm);
std::string representation_csv(const std::vector<std::vector<double>>& reps);

}  // namespace topicssl
