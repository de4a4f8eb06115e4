#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "topicssl/contrastive.hpp"
#include "topicssl/error.hpp"
#include "topicssl/recovery_eval.hpp"

using namespace topicssl;

namespace {

TopicWordMatrix small_a(std::size_t V, std::size_t K, std::uint64_t seed) {
  Rng rng(seed);
  return TopicWordMatrix(oracle::random_stochastic(V, K, rng));
}

GenConfig short_docs(double lambda = 10) {
  GenConfig g;
  g.lambda = lambda;
  g.min_length = 1;
  return g;
}

}  // namespace

TEST_SUITE("ssl_contrastive") {

TEST_CASE("labels are a fair coin") {
  const auto a = small_a(6, 3, 1);
  const auto pairs = make_pairs(a, PriorSpec::lda(3, 1.0), 1, 100000, short_docs(3), 5);
  double ones = 0;
  for (const auto& p : pairs) {
    CHECK(p.x_prime.size() == 1);
    ones += p.label;
  }
  const double se = std::sqrt(0.25 / 100000);
  CHECK(std::abs(ones / 100000 - 0.5) <= 3 * se);
}

TEST_CASE("pure negatives always use a different topic") {
  const auto a = small_a(6, 2, 2);
  const auto pairs = make_pairs(a, PriorSpec::pure(2), 1, 5000, short_docs(), 6);
  std::size_t negatives = 0, rejected = 0;
  for (const auto& p : pairs) {
    if (p.label == 1) {
      CHECK(!p.w_prime.has_value());
      continue;
    }
    ++negatives;
    REQUIRE(p.w_prime.has_value());
    CHECK(!(*p.w_prime == p.w));
    rejected += p.rejections > 0;
  }
  CHECK(negatives > 2000);
  // Half of the first negative draws collide with w under K = 2.
  CHECK(rejected > negatives / 3);
}

TEST_CASE("positive tuples follow A w") {
  const std::size_t V = 6, K = 3;
  const auto a = small_a(V, K, 3);
  const auto pairs = make_pairs(a, PriorSpec::pure(K), 1, 60000, short_docs(), 7);
  std::vector<std::vector<double>> hits(K, std::vector<double>(V, 0.0));
  std::vector<double> n(K, 0.0);
  for (const auto& p : pairs) {
    if (p.label != 1) continue;
    std::size_t k = 0;
    while (p.w[k] != 1.0) ++k;
    ++hits[k][p.x_prime[0]];
    ++n[k];
  }
  double chi2 = 0.0;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t v = 0; v < V; ++v) {
      const double e = n[k] * a(v, k);
      chi2 += (hits[k][v] - e) * (hits[k][v] - e) / e;
    }
  // 0.99 quantile of chi-square with 15 degrees of freedom.
  CHECK(chi2 < 30.578);
}

TEST_CASE("pair encoding") {
  const auto x = Document::from_words({0, 2, 2, 3}, 4);
  const std::vector<std::uint32_t> xp{1, 3};
  const Document* xs[] = {&x};
  const std::vector<std::uint32_t>* ps[] = {&xp};
  const auto e = encode_pairs(xs, ps, 4);
  REQUIRE(e.rows() == 12);
  Eigen::VectorXd expect(12);
  expect << 0.25, 0, 0.5, 0.25, 0, 1, 0, 0, 0, 0, 0, 1;
  CHECK(e.col(0) == expect);
}

TEST_CASE("g_transform") {
  CHECK(g_transform(0.5) == 1.0);
  CHECK(g_transform(0.75) == doctest::Approx(3.0));
  CHECK(std::isfinite(g_transform(1.0)));
  CHECK(g_transform(1.0, 0.01) == doctest::Approx(99.0));
  double prev = -1.0;
  for (double f = 0.0; f <= 1.0; f += 0.01) {
    const double g = g_transform(f, 0.02);
    if (f > 0.02 && f < 0.98) CHECK(g > prev);
    prev = g;
  }
  CHECK_THROWS_AS(g_transform(0.5, 0.0), DimensionError);
}

TEST_CASE("ideal classifier odds recover the likelihood ratio") {
  const auto a = small_a(8, 4, 4);
  Rng rng(8);
  for (int i = 0; i < 5; ++i) {
    const auto x = oracle::random_doc(8, 4, rng);
    for (std::uint32_t l1 = 0; l1 < 8; ++l1) {
      const std::vector<std::uint32_t> l{l1};
      const double f = pure_bayes_classifier(a, x, l);
      const double ratio = pure_rejection_to_ratio(g_transform(f), 4);
      const double expect = oracle::pure_predictive(a.matrix(), x, l) / oracle::pure_marginal(a.matrix(), l);
      CHECK(std::abs(ratio - expect) <= 1e-9 * std::max(1.0, expect));
      CHECK(std::abs(ratio * oracle::pure_marginal(a.matrix(), l) - oracle::pure_predictive(a.matrix(), x, l)) <= 1e-9);
      for (std::uint32_t l2 = 0; l2 < 8; ++l2) {
        const std::vector<std::uint32_t> ll{l1, l2};
        const double r2 = pure_rejection_to_ratio(g_transform(pure_bayes_classifier(a, x, ll)), 4);
        CHECK(std::abs(r2 * oracle::pure_marginal(a.matrix(), ll) - oracle::pure_predictive(a.matrix(), x, ll)) <= 1e-9);
      }
    }
  }
}

TEST_CASE("landmarks: all words when m = V") {
  const auto a = small_a(6, 3, 5);
  const auto lm = build_landmarks(a, PriorSpec::pure(3), 1, 6, OracleConfig{}, 1);
  CHECK(lm.size() == 6);
  double s = 0;
  for (std::size_t i = 0; i < 6; ++i) {
    const auto v = lm.landmarks[i][0];
    CHECK(lm.marginals[i] == doctest::Approx((a(v, 0) + a(v, 1) + a(v, 2)) / 3).epsilon(1e-14));
    s += lm.marginals[i];
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("landmark rank and errors") {
  const auto a = gen_topic_word_matrix(TopicMatrixKind::kIndependent, 1.0, 3, 20, 6);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto lm = build_landmarks(a, PriorSpec::pure(3), 1, 3, OracleConfig{}, seed);
    CHECK(numerical_rank(lm.a_tilde) == 3);
    CHECK(lm.a_tilde.cols() == 3);
  }
  CHECK_THROWS_AS(build_landmarks(a, PriorSpec::pure(3), 1, 2, OracleConfig{}, 0), RankError);
  CHECK_THROWS_AS(make_landmark_set(a, PriorSpec::pure(3), {{1}, {1}, {2}}, OracleConfig{}),
                  DegenerateLandmarkError);
}

TEST_CASE("recovery from ideal landmarks, t = 1") {
  const auto a = small_a(6, 3, 7);
  const auto prior = PriorSpec::pure(3);
  const auto lm = build_landmarks(a, prior, 1, 3, OracleConfig{}, 2);
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    const auto x = oracle::random_doc(6, 1 + i % 7, rng);
    const auto g = ideal_landmark_representation(a, prior, lm, x, OracleConfig{});
    const auto w = recover_from_landmarks(lm, g);
    CHECK(oracle::max_abs(vec(w), oracle::pure_posterior(a.matrix(), x)) <= 1e-10);
  }
  const auto empty = recover_from_landmarks(
      lm, ideal_landmark_representation(a, prior, lm, Document::from_words({}, 6), OracleConfig{}));
  CHECK(max_abs_diff(vec(empty), vec(prior_moment_tensor(prior, 1, {}))) <= 1e-12);
}

TEST_CASE("recovery from ideal landmarks, t = 2") {
  const auto a = small_a(5, 2, 8);
  const auto prior = PriorSpec::pure(2);
  const auto lm = build_landmarks(a, prior, 2, 4, OracleConfig{}, 3);
  Rng rng(10);
  for (int i = 0; i < 10; ++i) {
    const auto x = oracle::random_doc(5, 6, rng);
    const auto w = recover_from_landmarks(lm, ideal_landmark_representation(a, prior, lm, x, {}));
    CHECK(oracle::max_abs(vec(w), oracle::pure_second_moment(a.matrix(), x)) <= 1e-8);
  }
  // LDA prior, exact inputs built from one fixed tensor pair.
  OracleConfig cfg;
  cfg.n_samples = 5000;
  cfg.seed = 4;
  const auto lda = PriorSpec::lda(2, 1.0);
  const auto lm2 = build_landmarks(a, lda, 2, 4, cfg, 5);
  const auto x = Document::from_words({0, 4, 4}, 5);
  const auto post = posterior_moment_tensor(a, lda, x, 2, cfg, 0);
  const auto pri = prior_moment_tensor(lda, 2, cfg);
  std::vector<double> g;
  for (const auto& l : lm2.landmarks) g.push_back(contrastive_g_from_tensors(a, l, post.tensor, pri));
  CHECK(max_abs_diff(vec(recover_from_landmarks(lm2, g)), vec(symmetrize(post.tensor))) <= 1e-8);
}

TEST_CASE("recovery does not depend on the landmark subset") {
  const auto a = small_a(8, 3, 11);
  const auto prior = PriorSpec::pure(3);
  const auto x = Document::from_words({1, 5, 5, 7}, 8);
  const auto l1 = make_landmark_set(a, prior, {{0}, {3}, {6}}, {});
  const auto l2 = make_landmark_set(a, prior, {{1}, {2}, {4}, {7}}, {});
  const auto w1 = recover_from_landmarks(l1, ideal_landmark_representation(a, prior, l1, x, {}));
  const auto w2 = recover_from_landmarks(l2, ideal_landmark_representation(a, prior, l2, x, {}));
  CHECK(max_abs_diff(vec(w1), vec(w2)) <= 1e-8);
}

TEST_CASE("linear representability on held-out documents") {
  const auto a = small_a(8, 3, 12);
  const auto prior = PriorSpec::pure(3);
  const auto lm = build_landmarks(a, prior, 1, 3, {}, 6);
  Rng rng(13);
  auto reps_for = [&](std::size_t n, Matrix& reps, std::vector<double>& y) {
    reps = Matrix(n, lm.size());
    y.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto x = oracle::random_doc(8, 1 + rng.below(10), rng);
      const auto g = ideal_landmark_representation(a, prior, lm, x, {});
      for (std::size_t j = 0; j < g.size(); ++j) reps(i, j) = g[j];
      y[i] = oracle::pure_posterior(a.matrix(), x)[1];
    }
  };
  Matrix tr, te;
  std::vector<double> ytr, yte;
  reps_for(30, tr, ytr);
  reps_for(30, te, yte);
  const auto fit = linear_probe_fit(tr, ytr, 0.0);
  CHECK(probe_residual(fit, te, yte) <= 1e-6);
}

TEST_CASE("kernel regression") {
  const std::vector<double> y{1.0, 2.0, 3.0};
  CHECK(oracle::max_abs(kernel_regression(Matrix::identity(3), y, 0.0), y) == 0.0);

  Rng rng(14);
  const Matrix g = oracle::random_matrix(5, 5, rng);
  const std::vector<double> th0{0.5, -1.0, 2.0, 0.0, 1.5};
  const auto t = g * th0;
  const auto th = kernel_regression(g, t, 0.0);
  CHECK(oracle::max_abs(g * th, t) <= 1e-10);

  CHECK_THROWS_AS(kernel_regression(Matrix{{1.0, 1.0}, {1.0, 1.0}}, std::vector<double>{1.0, 1.0}, 0.0),
                  ConditioningError);
  CHECK_NOTHROW(kernel_regression(Matrix{{1.0, 1.0}, {1.0, 1.0}}, std::vector<double>{1.0, 1.0}, 1e-3));
}

TEST_CASE("self-referencing kernel regression matches oracle targets") {
  const auto a = small_a(8, 3, 15);
  const auto prior = PriorSpec::pure(3);
  Rng rng(16);
  std::vector<Document> docs;
  for (int i = 0; i < 3; ++i) docs.push_back(oracle::random_doc(8, 2 + i, rng));
  const Matrix g = build_kernel_matrix(a, prior, docs, {});
  std::vector<double> y;
  for (const auto& d : docs) y.push_back(oracle::pure_posterior(a.matrix(), d)[0]);
  const auto theta = kernel_regression(g, y, 0.0);
  CHECK(oracle::max_abs(g * theta, y) <= 1e-6);
  // The same theta on new documents, scored against the downstream docs.
  for (int i = 0; i < 20; ++i) {
    const auto x = oracle::random_doc(8, 1 + rng.below(8), rng);
    double pred = 0.0;
    for (std::size_t j = 0; j < docs.size(); ++j) pred += theta[j] * ideal_contrastive_g(a, prior, x, docs[j].words, {});
    CHECK(std::abs(pred - oracle::pure_posterior(a.matrix(), x)[0]) <= 1e-6);
  }
}

TEST_CASE("csv dumps") {
  const auto a = small_a(4, 2, 17);
  const auto lm = make_landmark_set(a, PriorSpec::pure(2), {{0, 1}, {2, 3}, {1, 1}, {3, 0}}, {});
  const auto csv = landmarks_csv(lm);
  CHECK(csv.rfind("landmark_id,word_1,word_2,marginal\n0,0,1,", 0) == 0);
  CHECK(representation_csv({{1.0, 2.5}}) == "doc_id,g_1,g_2\n0,1,2.5\n");
}

TEST_CASE("trained classifier beats the constant baseline and tracks Bayes" * doctest::timeout(600)) {
  const std::size_t V = 6, K = 3;
  const auto a = gen_topic_word_matrix(TopicMatrixKind::kIndependent, 1.0, K, V, 18);
  const auto prior = PriorSpec::pure(K);
  const auto gen = short_docs(10);
  const auto pairs = make_pairs(a, prior, 1, 20000, gen, 19);
  const auto val = make_pairs(a, prior, 1, 2000, gen, 20);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.width = 32;
  cfg.num_blocks = 2;
  cfg.learning_rate = 1e-3;
  cfg.seed = 21;
  auto m = make_contrastive_model(V, cfg);
  const auto hist = train_contrastive(m, pairs, cfg, val);
  CHECK(hist.back().val_loss < 0.25);
  double mae = 0.0;
  for (const auto& p : val) mae += std::abs(classify(m, p.x, p.x_prime) - pure_bayes_classifier(a, p.x, p.x_prime));
  mae /= static_cast<double>(val.size());
  MESSAGE("mean absolute error to Bayes " << mae);
  CHECK(mae <= 0.05);
}

TEST_CASE("single-atom prior trains to one half" * doctest::timeout(600)) {
  const auto a = small_a(6, 3, 22);
  const auto prior = PriorSpec::ctm({0.5, 0.0, -0.5}, Matrix(3, 3));
  const auto pairs = make_pairs(a, prior, 1, 5000, short_docs(), 23);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.width = 16;
  cfg.num_blocks = 1;
  cfg.learning_rate = 1e-3;
  auto m = make_contrastive_model(6, cfg);
  train_contrastive(m, pairs, cfg);
  for (std::size_t i = 0; i < 100; ++i) CHECK(std::abs(classify(m, pairs[i].x, pairs[i].x_prime) - 0.5) <= 0.05);
}

TEST_CASE("contrastive resume is bit-exact") {
  const auto a = small_a(6, 3, 24);
  const auto pairs = make_pairs(a, PriorSpec::pure(3), 1, 500, short_docs(), 25);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.width = 8;
  cfg.num_blocks = 1;
  cfg.seed = 3;
  auto m1 = make_contrastive_model(6, cfg);
  const auto h1 = train_contrastive(m1, pairs, cfg);
  auto m2 = make_contrastive_model(6, cfg);
  std::optional<TrainState> st;
  {
    ContrastiveTrainer tr(m2, pairs, {}, cfg);
    tr.run_epoch();
    st = tr.state();
  }
  ContrastiveTrainer tr2(m2, pairs, {}, cfg, st);
  while (!tr2.done()) tr2.run_epoch();
  CHECK(tr2.state().history == h1);
  CHECK(m2.parameters() == m1.parameters());
}

}  // TEST_SUITE
