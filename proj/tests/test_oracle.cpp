#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "topicssl/error.hpp"
#include "topicssl/posterior_oracle.hpp"

using namespace topicssl;

namespace {

TopicWordMatrix small_a(std::size_t V, std::size_t K, std::uint64_t seed) {
  Rng rng(seed);
  return TopicWordMatrix(oracle::random_stochastic(V, K, rng));
}

// Posterior mean under Dir(1) on the 2-simplex by the centroid rule on a
// barycentric grid of step h.
std::vector<double> grid_posterior_mean(const TopicWordMatrix& a, const Document& x, double h) {
  const int n = static_cast<int>(std::lround(1.0 / h));
  std::vector<double> mean(3, 0.0);
  double z = 0.0;
  auto visit = [&](double w0, double w1) {
    const double w[3] = {w0, w1, 1.0 - w0 - w1};
    double ll = 0.0;
    for (auto word : x.words) ll += std::log(a(word, 0) * w[0] + a(word, 1) * w[1] + a(word, 2) * w[2]);
    const double p = std::exp(ll);
    z += p;
    for (int k = 0; k < 3; ++k) mean[k] += p * w[k];
  };
  for (int i = 0; i < n; ++i)
    for (int j = 0; i + j < n; ++j) {
      visit((i + 1.0 / 3) * h, (j + 1.0 / 3) * h);
      if (i + j + 2 <= n) visit((i + 2.0 / 3) * h, (j + 2.0 / 3) * h);
    }
  for (auto& m : mean) m /= z;
  return mean;
}

}  // namespace

TEST_SUITE("posterior_oracle") {

TEST_CASE("pure_posterior basic cases") {
  const auto a = small_a(6, 3, 1);
  const auto empty = pure_posterior(a, Document::from_words({}, 6));
  for (std::size_t k = 0; k < 3; ++k) CHECK(empty[k] == doctest::Approx(1.0 / 3));

  const auto one = pure_posterior(a, Document::from_words({4}, 6));
  const double s = a(4, 0) + a(4, 1) + a(4, 2);
  for (std::size_t k = 0; k < 3; ++k) CHECK(one[k] == doctest::Approx(a(4, k) / s).epsilon(1e-14));

  Rng rng(2);
  for (int i = 0; i < 20; ++i) {
    const auto x = oracle::random_doc(6, 15, rng);
    CHECK(oracle::max_abs(pure_posterior(a, x).vector(), oracle::pure_posterior(a.matrix(), x)) < 1e-14);
  }
}

TEST_CASE("long single-topic document concentrates on its topic") {
  // Well separated: topic k puts 0.9 of its mass on its own block of words.
  const std::size_t V = 12, K = 4;
  Matrix m(V, K, 0.1 / 9);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t v = 3 * k; v < 3 * k + 3; ++v) m(v, k) = 0.3;
  const TopicWordMatrix a(m);
  GenConfig cfg;
  cfg.lambda = 30;
  Rng rng(3);
  auto x = sample_document(a, ProbVec::basis(K, 2), cfg, rng);
  while (x.length() != 30) x = sample_document(a, ProbVec::basis(K, 2), cfg, rng);
  CHECK(pure_posterior(a, x)[2] > 0.99);
}

TEST_CASE("zero likelihood raises") {
  const TopicWordMatrix a(Matrix{{0.5, 0.0}, {0.5, 0.5}, {0.0, 0.5}});
  CHECK_THROWS_AS(pure_posterior(a, Document::from_words({0, 2}, 3)), DegenerateLikelihoodError);
}

TEST_CASE("pure moment tensor is the diagonal of the posterior") {
  const auto a = small_a(6, 3, 4);
  const auto x = Document::from_words({0, 1, 5}, 6);
  const auto post = posterior_moment_tensor(a, PriorSpec::pure(3), x, 2, OracleConfig{});
  CHECK(post.estimator.kind == EstimatorInfo::Kind::kExact);
  CHECK(post.tensor.is_distribution(1e-12));
  CHECK(oracle::max_abs(vec(post.tensor), oracle::pure_second_moment(a.matrix(), x)) < 1e-15);
}

TEST_CASE("lda with an empty document returns the prior mean") {
  const auto a = small_a(6, 4, 5);
  OracleConfig cfg;
  cfg.n_samples = 100000;
  cfg.seed = 7;
  const auto post = posterior_moment_tensor(a, PriorSpec::lda(4, 1.0), Document::from_words({}, 6), 1, cfg);
  CHECK(post.estimator.kind == EstimatorInfo::Kind::kSnis);
  CHECK(post.estimator.ess == doctest::Approx(100000.0));
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(std::abs(post.tensor[k] - 0.25) <= 3 * post.estimator.mean_std_error[k]);
}

TEST_CASE("snis mean matches grid quadrature for a short lda document") {
  const auto a = small_a(6, 3, 6);
  const auto x = Document::from_words({0, 2, 2, 5, 1}, 6);
  OracleConfig cfg;
  cfg.n_samples = 1'000'000;
  cfg.seed = 8;
  // alpha_doc / K = 1: the flat Dirichlet, whose density the grid integrates.
  const auto post = posterior_moment_tensor(a, PriorSpec::lda(3, 3.0), x, 1, cfg);
  const auto grid = grid_posterior_mean(a, x, 0.005);
  for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(post.tensor[k] - grid[k]) <= 1e-3);
}

TEST_CASE("order-2 tensor is marginally consistent with order 1") {
  const auto a = small_a(8, 4, 9);
  const auto x = Document::from_words({0, 3, 3, 7}, 8);
  OracleConfig cfg;
  cfg.n_samples = 20000;
  cfg.seed = 3;
  const auto prior = PriorSpec::lda(4, 2.0);
  const auto p1 = posterior_moment_tensor(a, prior, x, 1, cfg, 5);
  const auto p2 = posterior_moment_tensor(a, prior, x, 2, cfg, 5);
  // Same stream and samples: the marginal is identical up to rounding.
  CHECK(oracle::max_abs(p2.tensor.first_marginal(), vec(p1.tensor)) < 1e-12);
  CHECK(p1.tensor.is_distribution(1e-9));
}

TEST_CASE("standard error shrinks by sqrt 2 when samples double") {
  const auto a = small_a(8, 4, 10);
  const auto x = Document::from_words({1, 2, 6}, 8);
  OracleConfig cfg;
  cfg.seed = 4;
  cfg.n_samples = 50000;
  const auto s1 = posterior_moment_tensor(a, PriorSpec::lda(4, 1.0), x, 1, cfg);
  cfg.n_samples = 100000;
  const auto s2 = posterior_moment_tensor(a, PriorSpec::lda(4, 1.0), x, 1, cfg);
  for (std::size_t k = 0; k < 4; ++k)
    CHECK(s1.estimator.mean_std_error[k] / s2.estimator.mean_std_error[k] ==
          doctest::Approx(std::sqrt(2.0)).epsilon(0.05));
}

TEST_CASE("adaptive sampling grows until min_ess") {
  const auto a = small_a(8, 4, 11);
  Rng rng(5);
  const auto x = oracle::random_doc(8, 30, rng);
  OracleConfig cfg;
  cfg.n_samples = 1000;
  cfg.min_ess = 2000;
  cfg.max_samples = 200000;
  cfg.seed = 1;
  const auto post = posterior_moment_tensor(a, PriorSpec::lda(4, 0.5), x, 1, cfg);
  CHECK((post.estimator.ess >= 2000 || post.estimator.n_samples == 200000));
  CHECK(post.estimator.n_samples % 1000 == 0);
}

TEST_CASE("ideal reconstruct predictor") {
  const auto a = small_a(6, 3, 12);
  const auto x = Document::from_words({0, 4, 4}, 6);
  const auto prior = PriorSpec::pure(3);
  const auto f1 = ideal_reconstruct_predictor(a, prior, x, 1, OracleConfig{});
  CHECK(oracle::max_abs(f1, a.word_distribution(oracle::pure_posterior(a.matrix(), x))) < 1e-15);

  // A certain posterior returns the column itself.
  const TopicWordMatrix sep(Matrix{{1.0, 0.0}, {0.0, 0.5}, {0.0, 0.5}});
  const auto fc = ideal_reconstruct_predictor(sep, PriorSpec::pure(2), Document::from_words({1}, 3), 1, {});
  CHECK(oracle::max_abs(fc, {0.0, 0.5, 0.5}) < 1e-15);

  const auto f2 = ideal_reconstruct_predictor(a, prior, x, 2, OracleConfig{});
  const auto w = oracle::pure_second_moment(a.matrix(), x);
  double total = 0.0;
  for (std::uint32_t y1 = 0; y1 < 6; ++y1)
    for (std::uint32_t y2 = 0; y2 < 6; ++y2) {
      double p = 0.0;
      for (std::size_t z1 = 0; z1 < 3; ++z1)
        for (std::size_t z2 = 0; z2 < 3; ++z2) p += a(y1, z1) * a(y2, z2) * w[z1 * 3 + z2];
      CHECK(f2[y1 * 6 + y2] == doctest::Approx(p).epsilon(1e-13));
      CHECK(p == doctest::Approx(oracle::pure_predictive(a.matrix(), x, {y1, y2})).epsilon(1e-13));
      total += f2[y1 * 6 + y2];
    }
  CHECK(std::abs(total - 1.0) <= 1e-6);
}

TEST_CASE("ideal contrastive g") {
  const auto a = small_a(6, 3, 13);
  const auto prior = PriorSpec::pure(3);
  const auto x = Document::from_words({1, 1, 3}, 6);
  for (std::uint32_t l = 0; l < 6; ++l) {
    const std::vector<std::uint32_t> lm{l};
    const double expect = oracle::pure_predictive(a.matrix(), x, lm) / oracle::pure_marginal(a.matrix(), lm);
    CHECK(ideal_contrastive_g(a, prior, x, lm, {}) == doctest::Approx(expect).epsilon(1e-13));
    CHECK(ideal_contrastive_g(a, prior, Document::from_words({}, 6), lm, {}) == doctest::Approx(1.0));
  }
  // Full enumeration for t = 2 on K = 4, V = 8.
  const auto a4 = small_a(8, 4, 14);
  const auto x4 = Document::from_words({0, 7, 2}, 8);
  for (std::uint32_t l1 = 0; l1 < 8; ++l1)
    for (std::uint32_t l2 = 0; l2 < 8; ++l2) {
      const std::vector<std::uint32_t> lm{l1, l2};
      const double expect =
          oracle::pure_predictive(a4.matrix(), x4, lm) / oracle::pure_marginal(a4.matrix(), lm);
      CHECK(ideal_contrastive_g(a4, PriorSpec::pure(4), x4, lm, {}) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("single-atom prior gives g = 1") {
  const auto a = small_a(6, 4, 15);
  const auto prior = PriorSpec::ctm({0.3, -0.2, 0.1, 0.0}, Matrix(4, 4));
  OracleConfig cfg;
  cfg.n_samples = 1000;
  const std::vector<std::uint32_t> lm{2};
  CHECK(ideal_contrastive_g(a, prior, Document::from_words({0, 5}, 6), lm, cfg) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("prior moment tensors") {
  const auto pure = prior_moment_tensor(PriorSpec::pure(3), 2, {});
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(pure[i * 3 + j] == (i == j ? doctest::Approx(1.0 / 3) : doctest::Approx(0.0)));

  OracleConfig cfg;
  cfg.n_samples = 100000;
  const auto lda1 = prior_moment_tensor(PriorSpec::lda(4, 1.0), 1, cfg);
  // Var(w_k) = a(a0 - a) / (a0^2 (a0 + 1)) with a = 1/4, a0 = 1.
  const double se1 = std::sqrt(0.25 * 0.75 / 2.0 / 100000);
  for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(lda1[k] - 0.25) <= 3 * se1);

  cfg.n_samples = 1'000'000;
  const auto lda2 = prior_moment_tensor(PriorSpec::lda(2, 2.0), 2, cfg);
  // w_0 ~ U(0,1): Var(w_0^2) = 1/5 - 1/9, Var(w_0 w_1) = 1/30 - 1/36.
  const double se_diag = std::sqrt((1.0 / 5 - 1.0 / 9) / 1e6);
  const double se_off = std::sqrt((1.0 / 30 - 1.0 / 36) / 1e6);
  CHECK(std::abs(lda2[0] - 1.0 / 3) <= 3 * se_diag);
  CHECK(std::abs(lda2[3] - 1.0 / 3) <= 3 * se_diag);
  CHECK(std::abs(lda2[1] - 1.0 / 6) <= 3 * se_off);
  CHECK(lda2[1] == lda2[2]);
}

}  // TEST_SUITE
