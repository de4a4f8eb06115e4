#include "topicssl/generative.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "topicssl/error.hpp"
#include "topicssl/parallel.hpp"

namespace topicssl {

TopicWordMatrix::TopicWordMatrix(Matrix a, double rank_tol) : a_(std::move(a)) {
  if (a_.empty()) throw DimensionError("TopicWordMatrix: empty matrix");
  if (!a_.all_finite()) throw DimensionError("TopicWordMatrix: non-finite entries");
  for (std::size_t k = 0; k < a_.cols(); ++k) {
    double s = 0.0;
    for (std::size_t v = 0; v < a_.rows(); ++v) {
      if (a_(v, k) < 0.0) throw DimensionError("TopicWordMatrix: negative entry");
      s += a_(v, k);
    }
    if (std::abs(s - 1.0) > 1e-9) {
      throw DimensionError("TopicWordMatrix: column " + std::to_string(k) + " sums to " +
                           std::to_string(s));
    }
  }
  pinv_ = pinv_left(a_, rank_tol);
}

std::vector<double> TopicWordMatrix::word_distribution(std::span<const double> w) const {
  return a_ * w;
}

namespace {

// Redistributes rounding error so every column sums to one exactly enough
// for the 1e-9 invariant.
void normalize_column(Matrix& a, std::size_t k) {
  double s = 0.0;
  for (std::size_t v = 0; v < a.rows(); ++v) s += a(v, k);
  for (std::size_t v = 0; v < a.rows(); ++v) a(v, k) /= s;
}

Matrix independent_matrix(double alpha_word, std::size_t K, std::size_t V, Rng& rng) {
  Matrix a(V, K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto col = rng.dirichlet_symmetric(alpha_word / static_cast<double>(K), V);
    for (std::size_t v = 0; v < V; ++v) a(v, k) = col[v];
    normalize_column(a, k);
  }
  return a;
}

Matrix grouped_matrix(double alpha_word, std::size_t K, std::size_t V, Rng& rng) {
  Matrix a(V, K);
  const std::size_t quart = std::max<std::size_t>(1, V / 4);
  for (std::size_t g = 0; g < K / 4; ++g) {
    const auto base = rng.dirichlet_symmetric(alpha_word / static_cast<double>(K), V);
    std::vector<std::size_t> rank(V);  // rank[r] = index in base of the r-th largest entry
    std::iota(rank.begin(), rank.end(), 0);
    std::stable_sort(rank.begin(), rank.end(),
                     [&](std::size_t i, std::size_t j) { return base[i] > base[j]; });

    // Random word order split into four blocks of `quart` positions.
    std::vector<std::size_t> words(V);
    std::iota(words.begin(), words.end(), 0);
    rng.shuffle(words);

    // position[r] = word that receives the r-th largest value.
    auto place = [&](std::size_t topic, const std::vector<std::size_t>& position) {
      for (std::size_t r = 0; r < V; ++r) a(position[r], 4 * g + topic) = base[rank[r]];
      normalize_column(a, 4 * g + topic);
    };
    // The top quartile goes on block `block`, everything else on the
    // remaining words in random order.
    auto layout_with_top_block = [&](std::size_t block) {
      std::vector<std::size_t> top(words.begin() + block * quart,
                                   words.begin() + (block + 1) * quart);
      std::vector<std::size_t> rest;
      rest.reserve(V - quart);
      for (std::size_t i = 0; i < V; ++i)
        if (i < block * quart || i >= (block + 1) * quart) rest.push_back(words[i]);
      rng.shuffle(rest);
      std::vector<std::size_t> position(top);
      position.insert(position.end(), rest.begin(), rest.end());
      return position;
    };

    const auto pos0 = layout_with_top_block(0);
    place(0, pos0);
    // Topic 1: same heavy words as topic 0, adjacent ranks swapped.
    auto pos1 = pos0;
    for (std::size_t r = 0; r + 1 < quart; r += 2) std::swap(pos1[r], pos1[r + 1]);
    std::vector<std::size_t> tail(pos1.begin() + quart, pos1.end());
    rng.shuffle(tail);
    std::copy(tail.begin(), tail.end(), pos1.begin() + quart);
    place(1, pos1);
    place(2, layout_with_top_block(V >= 3 * quart ? 1 : 0));
    place(3, layout_with_top_block(V >= 4 * quart ? 2 : 0));
  }
  return a;
}

}  // namespace

TopicWordMatrix gen_topic_word_matrix(TopicMatrixKind kind, double alpha_word, std::size_t K,
                                      std::size_t V, std::uint64_t seed) {
  if (K < 1) throw DimensionError("gen_topic_word_matrix: K must be >= 1");
  if (V < K) throw DimensionError("gen_topic_word_matrix: V must be >= K");
  if (!(alpha_word > 0.0)) throw DimensionError("gen_topic_word_matrix: alpha must be positive");
  if (kind == TopicMatrixKind::kGrouped && K % 4 != 0) {
    throw DimensionError("gen_topic_word_matrix: grouped layout needs K divisible by 4");
  }
  constexpr int kAttempts = 10;
  double last_smin = 0.0;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Rng rng(seed, static_cast<std::uint64_t>(attempt));
    Matrix a = kind == TopicMatrixKind::kIndependent ? independent_matrix(alpha_word, K, V, rng)
                                                     : grouped_matrix(alpha_word, K, V, rng);
    try {
      return TopicWordMatrix(std::move(a));
    } catch (const RankError& e) {
      last_smin = e.smallest_singular_value();
    }
  }
  throw RankError("gen_topic_word_matrix: no full-rank matrix after 10 attempts", last_smin);
}

PriorSpec PriorSpec::pure(std::size_t K) {
  if (K < 1) throw DimensionError("PriorSpec: K must be >= 1");
  return PriorSpec(K, PurePrior{});
}

PriorSpec PriorSpec::lda(std::size_t K, double alpha_doc) {
  if (K < 1) throw DimensionError("PriorSpec: K must be >= 1");
  if (!(alpha_doc > 0.0)) throw DimensionError("PriorSpec: alpha_doc must be positive");
  return PriorSpec(K, LdaPrior{alpha_doc});
}

PriorSpec PriorSpec::ctm(std::vector<double> mu, Matrix sigma) {
  const std::size_t K = mu.size();
  if (K < 1) throw DimensionError("PriorSpec: K must be >= 1");
  if (sigma.rows() != K || sigma.cols() != K) throw DimensionError("PriorSpec: sigma must be K x K");
  Matrix chol = cholesky_psd(sigma);
  return PriorSpec(K, CtmPrior{std::move(mu), std::move(sigma), std::move(chol)});
}

PriorSpec PriorSpec::pam(std::size_t K, std::size_t num_super, double alpha_super,
                         double alpha_sub) {
  if (K < 1 || num_super < 1) throw DimensionError("PriorSpec: K and num_super must be >= 1");
  if (!(alpha_super > 0.0) || !(alpha_sub > 0.0)) {
    throw DimensionError("PriorSpec: PAM concentrations must be positive");
  }
  return PriorSpec(K, PamPrior{num_super, alpha_super, alpha_sub});
}

std::string PriorSpec::tag() const {
  struct {
    std::string operator()(const PurePrior&) const { return "pure"; }
    std::string operator()(const LdaPrior&) const { return "lda"; }
    std::string operator()(const CtmPrior&) const { return "ctm"; }
    std::string operator()(const PamPrior&) const { return "pam"; }
  } visitor;
  return std::visit(visitor, kind_);
}

TopicProportions sample_w(const PriorSpec& prior, Rng& rng) {
  const std::size_t K = prior.num_topics();
  const auto& kind = prior.kind();
  if (std::holds_alternative<PurePrior>(kind)) {
    return ProbVec::basis(K, static_cast<std::size_t>(rng.below(K)));
  }
  if (const auto* lda = std::get_if<LdaPrior>(&kind)) {
    return ProbVec(rng.dirichlet_symmetric(lda->alpha_doc / static_cast<double>(K), K));
  }
  if (const auto* ctm = std::get_if<CtmPrior>(&kind)) {
    std::vector<double> z(K);
    for (auto& x : z) x = rng.normal();
    std::vector<double> eta = ctm->chol * z;
    double mx = -INFINITY;
    for (std::size_t k = 0; k < K; ++k) {
      eta[k] += ctm->mu[k];
      mx = std::max(mx, eta[k]);
    }
    double s = 0.0;
    for (double& e : eta) {
      e = std::exp(e - mx);
      s += e;
    }
    for (double& e : eta) e /= s;
    return ProbVec(std::move(eta));
  }
  const auto& pam = std::get<PamPrior>(kind);
  const auto theta = rng.dirichlet_symmetric(pam.alpha_super, pam.num_super);
  std::vector<double> w(K, 0.0);
  for (std::size_t s = 0; s < pam.num_super; ++s) {
    const auto phi = rng.dirichlet_symmetric(pam.alpha_sub, K);
    for (std::size_t k = 0; k < K; ++k) w[k] += theta[s] * phi[k];
  }
  double total = 0.0;
  for (double x : w) total += x;
  for (double& x : w) x /= total;
  return ProbVec(std::move(w));
}

Matrix ctm_covariance(std::size_t K, double diag, double rho) {
  if (K % 4 != 0 || K == 0) throw DimensionError("ctm_covariance: K must be a positive multiple of 4");
  if (!(diag > 0.0)) throw DimensionError("ctm_covariance: diag must be positive");
  if (!(std::abs(rho) < 1.0)) throw DimensionError("ctm_covariance: |rho| must be < 1");
  Matrix sigma(K, K);
  for (std::size_t i = 0; i < K; ++i) sigma(i, i) = diag;
  for (std::size_t g = 0; g < K / 4; ++g) {
    for (std::size_t off : {std::size_t{0}, std::size_t{1}}) {
      const std::size_t i = 4 * g + off;
      const std::size_t j = i + 2;
      sigma(i, j) = rho * diag;
      sigma(j, i) = rho * diag;
    }
  }
  // Each 2x2 block [[d, rd], [rd, d]] has eigenvalues d(1 +- rho) > 0.
  (void)cholesky_psd(sigma, 0.0);
  return sigma;
}

Document Document::from_words(std::vector<std::uint32_t> words, std::size_t V,
                              std::optional<TopicProportions> w) {
  Document d;
  d.counts.assign(V, 0);
  for (auto id : words) {
    if (id >= V) throw DimensionError("Document: word id " + std::to_string(id) + " out of range");
    ++d.counts[id];
  }
  d.words = std::move(words);
  d.w = std::move(w);
  return d;
}

Document sample_document(const TopicWordMatrix& a, const TopicProportions& w,
                         const GenConfig& cfg, Rng& rng) {
  if (w.size() != a.num_topics()) throw DimensionError("sample_document: w has wrong dimension");
  if (!(cfg.lambda > 0.0)) throw DimensionError("sample_document: lambda must be positive");
  std::uint64_t n = 0;
  std::size_t tries = 0;
  do {
    if (++tries > kMaxLengthRejections) {
      throw Error("sample_document: could not draw a length >= " + std::to_string(cfg.min_length));
    }
    n = rng.poisson(cfg.lambda);
  } while (n < std::max<std::size_t>(cfg.min_length, 1));

  const CategoricalSampler word_dist(a.word_distribution(w.values()));
  std::vector<std::uint32_t> words(n);
  for (auto& id : words) id = static_cast<std::uint32_t>(word_dist(rng));
  return Document::from_words(std::move(words), a.vocab_size(), w);
}

std::vector<Document> make_corpus(const TopicWordMatrix& a, const PriorSpec& prior,
                                  const GenConfig& cfg, int threads) {
  if (prior.num_topics() != a.num_topics()) throw DimensionError("make_corpus: prior/matrix K mismatch");
  std::vector<Document> docs(cfg.corpus_size);
  parallel_for(cfg.corpus_size, threads, [&](std::size_t i) {
    Rng rng(cfg.seed, i);
    auto w = sample_w(prior, rng);
    docs[i] = sample_document(a, w, cfg, rng);
  });
  return docs;
}

}  // namespace topicssl
