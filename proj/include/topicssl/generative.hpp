#pragma once

// Topic-word matrices, topic priors and document sampling.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "topicssl/linalg.hpp"
#include "topicssl/rng.hpp"

namespace topicssl {

using TopicProportions = ProbVec;

// V x K column-stochastic matrix of full column rank. The left pseudo-inverse
// is computed once at construction (which is also the rank check).
class TopicWordMatrix {
 public:
  explicit TopicWordMatrix(Matrix a, double rank_tol = kDefaultRankTol);

  std::size_t vocab_size() const { return a_.rows(); }
  std::size_t num_topics() const { return a_.cols(); }
  const Matrix& matrix() const { return a_; }
  const Matrix& pinv() const { return pinv_; }
  double operator()(std::size_t v, std::size_t k) const { return a_(v, k); }

  // A w, the word distribution of a document with topic proportions w.
  std::vector<double> word_distribution(std::span<const double> w) const;

 private:
  Matrix a_;
  Matrix pinv_;
};

enum class TopicMatrixKind { kIndependent, kGrouped };

// independent: every column drawn from Dir(alpha_word / K) over V words.
// grouped: K/4 base vectors from Dir(alpha_word / K); each base vector is
// laid out four times. Topic 0 places it under a random permutation; topic 1
// keeps topic 0's top-quartile word positions but swaps adjacent ranks within
// them, so the two share their heavy words; topics 2 and 3 put their top
// quartile on word blocks disjoint from topic 0 and from each other.
// Matrices that fail the rank check are redrawn up to 10 times.
TopicWordMatrix gen_topic_word_matrix(TopicMatrixKind kind, double alpha_word, std::size_t K,
                                      std::size_t V, std::uint64_t seed);

struct PurePrior {};
struct LdaPrior {
  double alpha_doc = 1.0;  // w ~ Dir(alpha_doc / K)
};
struct CtmPrior {
  std::vector<double> mu;
  Matrix sigma;
  Matrix chol;  // lower factor of sigma
};
struct PamPrior {
  std::size_t num_super = 4;
  double alpha_super = 0.25;  // Dir(alpha_super) over super-topics
  double alpha_sub = 30.0;    // Dir(alpha_sub) over topics, one per super-topic
};

class PriorSpec {
 public:
  static PriorSpec pure(std::size_t K);
  static PriorSpec lda(std::size_t K, double alpha_doc);
  // Logistic-normal prior: w = softmax(eta), eta ~ N(mu, sigma). Throws
  // NotPositiveSemidefiniteError when sigma has no Cholesky factor.
  static PriorSpec ctm(std::vector<double> mu, Matrix sigma);
  static PriorSpec pam(std::size_t K, std::size_t num_super, double alpha_super, double alpha_sub);

  std::size_t num_topics() const { return K_; }
  // "pure", "lda", "ctm" or "pam".
  std::string tag() const;

  bool is_pure() const { return std::holds_alternative<PurePrior>(kind_); }
  const auto& kind() const { return kind_; }

 private:
  PriorSpec(std::size_t K, std::variant<PurePrior, LdaPrior, CtmPrior, PamPrior> kind)
      : K_(K), kind_(std::move(kind)) {}

  std::size_t K_;
  std::variant<PurePrior, LdaPrior, CtmPrior, PamPrior> kind_;
};

// Draws topic proportions from the prior. Pure draws a uniformly random basis
// vector; PAM mixes one sub-topic proportion per super-topic,
// w = sum_s theta_s phi^(s), which is the per-word two-stage sampling
// marginalised over super-topic assignments.
TopicProportions sample_w(const PriorSpec& prior, Rng& rng);

// Covariance for the grouped logistic-normal prior: diag on the diagonal and
// rho * diag on the pairs (4g, 4g+2) and (4g+1, 4g+3) of each group g.
Matrix ctm_covariance(std::size_t K, double diag, double rho);

struct Document {
  std::vector<std::uint32_t> words;   // word ids in draw order
  std::vector<std::uint32_t> counts;  // length-V bag of words
  std::optional<TopicProportions> w;  // generating proportions, if known

  static Document from_words(std::vector<std::uint32_t> words, std::size_t V,
                             std::optional<TopicProportions> w = std::nullopt);
  std::size_t length() const { return words.size(); }
};

struct GenConfig {
  double lambda = 30.0;           // Poisson mean length
  std::uint64_t seed = 0;
  std::size_t corpus_size = 0;
  std::size_t min_length = 2;     // shorter Poisson draws are rejected
};

// Rejection cap on document length draws.
inline constexpr std::size_t kMaxLengthRejections = 1'000'000;

Document sample_document(const TopicWordMatrix& a, const TopicProportions& w,
                         const GenConfig& cfg, Rng& rng);

// corpus_size documents; document i uses stream i of cfg.seed, so the result
// is independent of `threads`.
std::vector<Document> make_corpus(const TopicWordMatrix& a, const PriorSpec& prior,
                                  const GenConfig& cfg, int threads = 1);

}  // namespace topicssl
