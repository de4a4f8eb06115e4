#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>
#include <set>

#include "oracles.hpp"
#include "topicssl/error.hpp"
#include "topicssl/generative.hpp"
#include "topicssl/posterior_oracle.hpp"
#include "topicssl/rng.hpp"

using namespace topicssl;

namespace {

double cosine(const Matrix& a, std::size_t i, std::size_t j) {
  double d = 0, ni = 0, nj = 0;
  for (std::size_t v = 0; v < a.rows(); ++v) {
    d += a(v, i) * a(v, j);
    ni += a(v, i) * a(v, i);
    nj += a(v, j) * a(v, j);
  }
  return d / std::sqrt(ni * nj);
}

}  // namespace

TEST_SUITE("rng") {

TEST_CASE("streams are reproducible and distinct") {
  Rng a(42, 3), b(42, 3), c(42, 4);
  for (int i = 0; i < 10; ++i) {
    const auto x = a.next_u64();
    CHECK(x == b.next_u64());
    CHECK(x != c.next_u64());
  }
  CHECK(derive_seed(1, "train") != derive_seed(1, "test_docs"));
  CHECK(derive_seed(1, "train") == derive_seed(1, "train"));
}

TEST_CASE("uniform, below, normal and gamma moments") {
  Rng rng(9);
  const int n = 100000;
  double su = 0, sn = 0, sn2 = 0, sg = 0;
  std::vector<int> hist(7, 0);
  for (int i = 0; i < n; ++i) {
    su += rng.uniform();
    const double z = rng.normal();
    sn += z;
    sn2 += z * z;
    sg += rng.gamma(2.5);
    ++hist[rng.below(7)];
  }
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(std::abs(sn / n) < 0.02);
  CHECK(sn2 / n == doctest::Approx(1.0).epsilon(0.02));
  CHECK(sg / n == doctest::Approx(2.5).epsilon(0.02));
  for (int h : hist) CHECK(std::abs(h - n / 7.0) < 5 * std::sqrt(n / 7.0));
}

TEST_CASE("poisson mean") {
  Rng rng(10);
  for (double mean : {0.5, 30.0, 5000.0}) {
    double s = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) s += static_cast<double>(rng.poisson(mean));
    CHECK(std::abs(s / n - mean) < 5 * std::sqrt(mean / n));
  }
}

TEST_CASE("dirichlet with tiny concentration stays on the simplex") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const auto p = rng.dirichlet_symmetric(0.01, 50);
    CHECK_NOTHROW(ProbVec(p));
  }
}

}  // TEST_SUITE

TEST_SUITE("generative") {

TEST_CASE("independent topic matrix invariants") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto a = gen_topic_word_matrix(TopicMatrixKind::kIndependent, 1.0, 3, 8, seed);
    for (std::size_t k = 0; k < 3; ++k) {
      double s = 0;
      for (std::size_t v = 0; v < 8; ++v) {
        CHECK(a(v, k) >= 0.0);
        s += a(v, k);
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
    CHECK(numerical_rank(a.matrix()) == 3);
    CHECK(std::isfinite(l1_cond_number(a.pinv())));
  }
}

TEST_CASE("grouped topics 0 and 1 are more similar than 0 and 2") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto a = gen_topic_word_matrix(TopicMatrixKind::kGrouped, 1.0, 4, 40, seed);
    CHECK(cosine(a.matrix(), 0, 1) > cosine(a.matrix(), 0, 2));
  }
  CHECK_THROWS_AS(gen_topic_word_matrix(TopicMatrixKind::kGrouped, 1.0, 6, 40, 1), DimensionError);
}

TEST_CASE("generated matrix supports exact recovery") {
  const auto a = gen_topic_word_matrix(TopicMatrixKind::kIndependent, 1.0, 4, 20, 7);
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    const auto x = oracle::random_doc(20, 10, rng);
    const auto f = a.word_distribution(oracle::pure_posterior(a.matrix(), x));
    CHECK(oracle::max_abs(a.pinv() * f, oracle::pure_posterior(a.matrix(), x)) < 1e-10);
  }
}

TEST_CASE("pure prior draws vertices uniformly") {
  const auto prior = PriorSpec::pure(4);
  Rng rng(12);
  std::vector<int> counts(4, 0);
  for (int i = 0; i < 10000; ++i) {
    const auto w = sample_w(prior, rng);
    int ones = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK((w[k] == 0.0 || w[k] == 1.0));
      if (w[k] == 1.0) {
        ++ones;
        ++counts[k];
      }
    }
    CHECK(ones == 1);
  }
  for (int c : counts) CHECK(std::abs(c / 10000.0 - 0.25) <= 0.02);
}

TEST_CASE("pure prior moment tensor matches empirical moments") {
  const auto prior = PriorSpec::pure(3);
  const auto exact = prior_moment_tensor(prior, 2, OracleConfig{});
  Rng rng(13);
  const int n = 100000;
  std::vector<double> emp(9, 0.0);
  for (int i = 0; i < n; ++i) {
    const auto w = sample_w(prior, rng);
    for (std::size_t a = 0; a < 3; ++a)
      for (std::size_t b = 0; b < 3; ++b) emp[a * 3 + b] += w[a] * w[b] / n;
  }
  for (std::size_t i = 0; i < 9; ++i) {
    const double p = exact[i];
    const double se = std::sqrt(p * (1 - p) / n);
    CHECK(std::abs(emp[i] - p) <= 3 * se + 1e-15);
  }
}

TEST_CASE("ctm with zero covariance is deterministic softmax(mu)") {
  const std::vector<double> mu{0.0, 1.0, -1.0, 2.0};
  const auto prior = PriorSpec::ctm(mu, Matrix(4, 4));
  Rng rng(14);
  double z = 0;
  for (double m : mu) z += std::exp(m);
  for (int i = 0; i < 5; ++i) {
    const auto w = sample_w(prior, rng);
    for (std::size_t k = 0; k < 4; ++k) CHECK(w[k] == doctest::Approx(std::exp(mu[k]) / z).epsilon(1e-12));
  }
  CHECK_THROWS_AS(PriorSpec::ctm(mu, Matrix{{1, 0, 0, 0}, {0, -1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}}),
                  NotPositiveSemidefiniteError);
}

TEST_CASE("pam with one super-topic is Dirichlet(alpha_sub)") {
  const std::size_t K = 3;
  const double alpha = 2.0;
  const auto prior = PriorSpec::pam(K, 1, 0.25, alpha);
  Rng rng(15);
  const int n = 100000;
  double m0 = 0, m00 = 0, m01 = 0;
  double s0 = 0, s00 = 0, s01 = 0;
  for (int i = 0; i < n; ++i) {
    const auto w = sample_w(prior, rng);
    m0 += w[0];
    s0 += w[0] * w[0];
    m00 += w[0] * w[0];
    s00 += std::pow(w[0], 4);
    m01 += w[0] * w[1];
    s01 += std::pow(w[0] * w[1], 2);
  }
  const double a0 = alpha * K;
  const double e0 = alpha / a0;
  const double e00 = alpha * (alpha + 1) / (a0 * (a0 + 1));
  const double e01 = alpha * alpha / (a0 * (a0 + 1));
  auto check = [n](double sum, double sumsq, double expect) {
    const double mean = sum / n;
    const double se = std::sqrt((sumsq / n - mean * mean) / n);
    CHECK(std::abs(mean - expect) <= 3 * se);
  };
  check(m0, s0, e0);
  check(m00, s00, e00);
  check(m01, s01, e01);
}

TEST_CASE("every prior samples onto the simplex") {
  const std::size_t K = 8;
  const PriorSpec priors[] = {PriorSpec::pure(K), PriorSpec::lda(K, 0.1),
                              PriorSpec::ctm(std::vector<double>(K, 0.0), ctm_covariance(K, 15, 0.99)),
                              PriorSpec::pam(K, 4, 0.25, 30)};
  Rng rng(16);
  for (const auto& p : priors)
    for (int i = 0; i < 1000; ++i) {
      const auto w = sample_w(p, rng);
      double s = 0;
      for (std::size_t k = 0; k < K; ++k) {
        CHECK(w[k] >= 0.0);
        s += w[k];
      }
      CHECK(std::abs(s - 1.0) <= 1e-9);
    }
}

TEST_CASE("ctm_covariance structure") {
  const Matrix s = ctm_covariance(4, 15, 0.99);
  CHECK(s(0, 2) == doctest::Approx(14.85));
  CHECK(s(2, 0) == doctest::Approx(14.85));
  CHECK(s(1, 3) == doctest::Approx(14.85));
  CHECK(s(0, 1) == 0.0);
  CHECK(s(0, 0) == 15.0);
  CHECK(max_abs_diff(ctm_covariance(8, 15, 0.0), 15.0 * Matrix::identity(8)) == 0.0);

  const Matrix s20 = ctm_covariance(20, 15, 0.99);
  int nonzero_pairs = 0;
  Eigen::MatrixXd e(20, 20);
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j) {
      e(i, j) = s20(i, j);
      CHECK(s20(i, j) == s20(j, i));
      if (i < j && s20(i, j) != 0.0) ++nonzero_pairs;
    }
  CHECK(nonzero_pairs == 2 * (20 / 4));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(e);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("one-topic document frequencies converge to the topic column") {
  const auto a = gen_topic_word_matrix(TopicMatrixKind::kIndependent, 1.0, 3, 12, 5);
  GenConfig cfg;
  cfg.lambda = 10000;
  cfg.min_length = 1;
  Rng rng(17);
  const auto doc = sample_document(a, ProbVec::basis(3, 1), cfg, rng);
  std::vector<double> freq(12), col(12);
  for (std::size_t v = 0; v < 12; ++v) {
    freq[v] = static_cast<double>(doc.counts[v]) / static_cast<double>(doc.length());
    col[v] = a(v, 1);
  }
  CHECK(tv_distance(freq, col) < 0.05);
  REQUIRE(doc.w.has_value());
  CHECK(*doc.w == ProbVec::basis(3, 1));
}

TEST_CASE("document length follows the Poisson mean") {
  const auto a = gen_topic_word_matrix(TopicMatrixKind::kIndependent, 1.0, 2, 5, 1);
  GenConfig cfg;
  cfg.lambda = 1000;
  cfg.min_length = 1;
  Rng rng(18);
  double total = 0;
  for (int i = 0; i < 10000; ++i) total += sample_document(a, ProbVec::uniform(2), cfg, rng).length();
  CHECK(std::abs(total / 10000 - 1000) <= 10);
}

TEST_CASE("counts are consistent with words and order-free") {
  const auto d1 = Document::from_words({3, 1, 3, 0}, 5);
  const auto d2 = Document::from_words({0, 3, 3, 1}, 5);
  CHECK(d1.counts == std::vector<std::uint32_t>{1, 1, 0, 2, 0});
  CHECK(d1.counts == d2.counts);
  CHECK_THROWS_AS(Document::from_words({7}, 5), DimensionError);
}

TEST_CASE("make_corpus determinism and thread independence") {
  const auto a = gen_topic_word_matrix(TopicMatrixKind::kIndependent, 1.0, 4, 30, 2);
  const auto prior = PriorSpec::lda(4, 1.0);
  GenConfig cfg;
  cfg.seed = 99;
  cfg.corpus_size = 200;
  const auto c1 = make_corpus(a, prior, cfg, 1);
  const auto c2 = make_corpus(a, prior, cfg, 3);
  REQUIRE(c1.size() == 200);
  for (std::size_t i = 0; i < c1.size(); ++i) {
    CHECK(c1[i].words == c2[i].words);
    CHECK(*c1[i].w == *c2[i].w);
    CHECK(c1[i].length() >= cfg.min_length);
  }
  cfg.corpus_size = 0;
  CHECK(make_corpus(a, prior, cfg).empty());
}

TEST_CASE("pure corpus topic mean is uniform") {
  const std::size_t K = 4;
  const auto a = gen_topic_word_matrix(TopicMatrixKind::kIndependent, 1.0, K, 30, 3);
  GenConfig cfg;
  cfg.seed = 5;
  cfg.corpus_size = 20000;
  cfg.lambda = 5;
  const auto corpus = make_corpus(a, PriorSpec::pure(K), cfg);
  const double n = static_cast<double>(corpus.size());
  for (std::size_t k = 0; k < K; ++k) {
    double m = 0;
    for (const auto& d : corpus) m += (*d.w)[k];
    m /= n;
    const double se = std::sqrt(0.25 * 0.75 / n);
    CHECK(std::abs(m - 0.25) <= 3 * se);
  }
}

}  // TEST_SUITE
