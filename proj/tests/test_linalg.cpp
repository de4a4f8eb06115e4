#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "topicssl/error.hpp"
#include "topicssl/linalg.hpp"

using namespace topicssl;

TEST_SUITE("linalg") {

TEST_CASE("kron small cases") {
  CHECK(kron(Matrix::identity(2), Matrix::identity(2)) == Matrix::identity(4));
  const Matrix s = kron(Matrix{{2.0}}, Matrix{{3.0}});
  CHECK(s == Matrix{{6.0}});
}

TEST_CASE("kron matches the entrywise definition") {
  Rng rng(1);
  const Matrix a = oracle::random_matrix(3, 2, rng);
  const Matrix b = oracle::random_matrix(3, 2, rng);
  CHECK(max_abs_diff(kron(a, b), oracle::kron_loops(a, b)) == 0.0);
}

TEST_CASE("kron_power and kron_power_apply agree") {
  Rng rng(2);
  const Matrix m = oracle::random_matrix(3, 4, rng);
  const Matrix p3 = kron_power(m, 3);
  CHECK(p3.rows() == 27);
  CHECK(p3.cols() == 64);
  CHECK(max_abs_diff(p3, oracle::kron_loops(oracle::kron_loops(m, m), m)) < 1e-15);
  std::vector<double> x(64);
  for (auto& v : x) v = rng.uniform();
  CHECK(max_abs_diff(kron_power_apply(m, 3, x), p3 * x) < 1e-12);
  CHECK(kron_power(m, 1) == m);
}

TEST_CASE("kron refuses oversized products") {
  CHECK_THROWS_AS(kron(Matrix(100, 100), Matrix(100, 100), 1000), SizeLimitError);
}

TEST_CASE("pinv_left") {
  CHECK(max_abs_diff(pinv_left(Matrix::identity(3)), Matrix::identity(3)) < 1e-14);
  const Matrix p = pinv_left(Matrix{{1.0}, {1.0}});
  REQUIRE(p.rows() == 1);
  CHECK(p(0, 0) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(p(0, 1) == doctest::Approx(0.5).epsilon(1e-14));

  Rng rng(3);
  const Matrix a = oracle::random_matrix(10, 4, rng);
  CHECK(max_abs_diff(pinv_left(a) * a, Matrix::identity(4)) <= 1e-8);
}

TEST_CASE("pinv_left rejects rank-deficient input") {
  const Matrix a{{1.0, 2.0}, {2.0, 4.0}, {3.0, 6.0}};
  CHECK_THROWS_AS(pinv_left(a), RankError);
  CHECK(numerical_rank(a) == 1);
}

TEST_CASE("svd reconstructs the matrix") {
  Rng rng(4);
  for (auto [r, c] : {std::pair{6, 3}, std::pair{3, 6}}) {
    const Matrix a = oracle::random_matrix(r, c, rng);
    const Svd d = svd(a);
    Matrix s(d.s.size(), d.s.size());
    for (std::size_t i = 0; i < d.s.size(); ++i) s(i, i) = d.s[i];
    CHECK(max_abs_diff(d.u * s * d.v.transpose(), a) < 1e-12);
    for (std::size_t i = 1; i < d.s.size(); ++i) CHECK(d.s[i - 1] >= d.s[i]);
  }
}

TEST_CASE("l1_cond_number") {
  CHECK(l1_cond_number(Matrix::identity(5)) == 1.0);
  CHECK(l1_cond_number(Matrix{{1.0, 0.0}, {-2.0, 3.0}}) == 3.0);
  Rng rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const Matrix b = oracle::random_matrix(3, 4, rng);
    const double k = l1_cond_number(b);
    CHECK(l1_cond_number(oracle::kron_loops(b, b)) == doctest::Approx(k * k).epsilon(1e-12));
  }
}

TEST_CASE("tv_distance") {
  const std::vector<double> p{0.2, 0.3, 0.5};
  CHECK(tv_distance(p, p) == 0.0);
  CHECK(tv_distance(ProbVec::basis(3, 0), ProbVec::basis(3, 1)) == 1.0);
  CHECK(tv_distance(std::vector<double>{0.5, 0.5}, std::vector<double>{0.9, 0.1}) ==
        doctest::Approx(0.4).epsilon(1e-14));
}

TEST_CASE("ProbVec validation") {
  CHECK_NOTHROW(ProbVec({0.25, 0.75}));
  CHECK_THROWS_AS(ProbVec({0.5, 0.6}), DimensionError);
  CHECK_THROWS_AS(ProbVec({-0.1, 1.1}), DimensionError);
  const ProbVec c = ProbVec::clip_normalize(std::vector<double>{-0.5, 1.5, 0.5});
  CHECK(c[0] == 0.0);
  CHECK(c[1] == doctest::Approx(2.0 / 3.0));
  CHECK(ProbVec::clip_normalize(std::vector<double>{-1.0, -2.0}) == ProbVec::uniform(2));
}

TEST_CASE("vec/unvec layout") {
  Rng rng(6);
  std::vector<double> e(9);
  for (auto& x : e) x = rng.uniform();
  const MomentTensor t(2, 3, e);
  CHECK(unvec(vec(t), 2, 3) == t);
  CHECK(vec(MomentTensor(2, 4)).size() == 16);
  const std::size_t idx[] = {1, 2};
  CHECK(t.at(idx) == e[1 * 3 + 2]);
  CHECK_THROWS_AS(unvec(e, 2, 4), DimensionError);
}

TEST_CASE("symmetrize") {
  const MomentTensor sym(2, 2, {1.0, 2.0, 2.0, 3.0});
  CHECK(symmetrize(sym) == sym);
  const MomentTensor s = symmetrize(MomentTensor(2, 2, {0.0, 1.0, 0.0, 0.0}));
  CHECK(s[1] == 0.5);
  CHECK(s[2] == 0.5);
  CHECK(s[0] == 0.0);

  // The symmetric part is the Frobenius projection: T - sym(T) is orthogonal
  // to every symmetric matrix, checked against random symmetric S.
  Rng rng(7);
  std::vector<double> e(16);
  for (auto& x : e) x = rng.uniform();
  const MomentTensor t(2, 4, e);
  const MomentTensor p = symmetrize(t);
  double best = 0.0;
  for (std::size_t i = 0; i < 16; ++i) best += (t[i] - p[i]) * (t[i] - p[i]);
  for (int rep = 0; rep < 200; ++rep) {
    std::vector<double> s(16);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = i; j < 4; ++j) s[i * 4 + j] = s[j * 4 + i] = p[i * 4 + j] + 0.1 * (rng.uniform() - 0.5);
    double d = 0.0;
    for (std::size_t i = 0; i < 16; ++i) d += (t[i] - s[i]) * (t[i] - s[i]);
    CHECK(d >= best - 1e-15);
  }
}

TEST_CASE("outer_power and marginals") {
  const std::vector<double> w{0.2, 0.3, 0.5};
  const MomentTensor o = outer_power(w, 2);
  CHECK(o.is_distribution(1e-12));
  CHECK(o[0 * 3 + 2] == doctest::Approx(0.1));
  CHECK(oracle::max_abs(o.first_marginal(), w) < 1e-15);
  CHECK(oracle::max_abs(outer_power(w, 3).first_marginal(), w) < 1e-15);
}

TEST_CASE("cholesky_psd") {
  const Matrix s{{4.0, 2.0}, {2.0, 3.0}};
  const Matrix l = cholesky_psd(s);
  CHECK(max_abs_diff(l * l.transpose(), s) < 1e-14);
  CHECK(max_abs_diff(cholesky_psd(Matrix(3, 3)), Matrix(3, 3)) == 0.0);
  CHECK_THROWS_AS(cholesky_psd(Matrix{{1.0, 0.0}, {0.0, -1.0}}), NotPositiveSemidefiniteError);
}

TEST_CASE("ridge_solve and min_norm_solve") {
  Rng rng(8);
  const Matrix a = oracle::random_matrix(8, 3, rng);
  const std::vector<double> x0{1.0, -2.0, 0.5};
  const auto b = a * x0;
  CHECK(oracle::max_abs(ridge_solve(a, b, 0.0), x0) < 1e-12);
  CHECK(oracle::max_abs(min_norm_solve(a, b), x0) < 1e-12);

  const Matrix d{{1.0, 1.0}, {1.0, 1.0}};
  CHECK_THROWS_AS(ridge_solve(d, std::vector<double>{2.0, 2.0}, 0.0), ConditioningError);
  const auto mn = min_norm_solve(d, std::vector<double>{2.0, 2.0});
  CHECK(mn[0] == doctest::Approx(1.0));
  CHECK(mn[1] == doctest::Approx(1.0));
}

}  // TEST_SUITE
