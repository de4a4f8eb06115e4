#pragma once

// Small dense linear algebra used by the recovery machinery: Kronecker
// products, left pseudo-inverses through a one-sided Jacobi SVD, the l1
// condition number, total variation distance and moment tensors.
//
// Layout conventions
// ------------------
// Matrices are row-major. A MomentTensor of order t and side K stores the
// entry (z_1, ..., z_t) at offset ((z_1 * K + z_2) * K + ...) + z_t, i.e. the
// last index varies fastest. This is the same ordering as the columns of the
// Kronecker power A (x) A (x) ... (x) A, whose row (y_1, ..., y_t) likewise sits
// at ((y_1 * V + y_2) * V + ...) + y_t. Every routine that moves between word
// tuples and tensor entries relies on this single convention.

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace topicssl {

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> d);
  static Matrix column(std::span<const double> v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::vector<double> col(std::size_t c) const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }

  Matrix transpose() const;
  bool all_finite() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
std::vector<double> operator*(const Matrix& a, std::span<const double> x);

// Entrywise max |a - b|.
double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

// Default cap on the number of entries a Kronecker product may produce.
inline constexpr std::size_t kDefaultKronMaxEntries = std::size_t{1} << 26;

Matrix kron(const Matrix& a, const Matrix& b,
            std::size_t max_entries = kDefaultKronMaxEntries);
// a (x) a (x) ... (x) a with `power` factors; power 1 returns a.
Matrix kron_power(const Matrix& a, int power,
                  std::size_t max_entries = kDefaultKronMaxEntries);
// Computes (m (x) ... (x) m) x without materialising the Kronecker power.
// x has length m.cols()^power, the result m.rows()^power.
std::vector<double> kron_power_apply(const Matrix& m, int power,
                                     std::span<const double> x);

struct Svd {
  Matrix u;                 // rows x n, orthonormal columns
  std::vector<double> s;    // n singular values, descending
  Matrix v;                 // n x n orthogonal
};

// Thin SVD via one-sided Jacobi rotations. For rows < cols the decomposition
// of the transpose is computed and the factors swapped, so u is always
// rows x min(rows, cols).
Svd svd(const Matrix& a);

inline constexpr double kDefaultRankTol = 1e-10;

// Left pseudo-inverse (A^T A)^{-1} A^T. Throws RankError when the smallest
// singular value is not above tol times the largest.
Matrix pinv_left(const Matrix& a, double tol = kDefaultRankTol);

// Numerical rank at relative tolerance tol.
std::size_t numerical_rank(const Matrix& a, double tol = kDefaultRankTol);

// Maximum column l1 norm.
double l1_cond_number(const Matrix& b);

// Lower-triangular L with L L^T = a for symmetric positive semidefinite a.
// Zero pivots are accepted when the rest of their column vanishes, so a
// singular PSD matrix (including the zero matrix) factors exactly. Retries
// once with `jitter` added to the diagonal before giving up.
Matrix cholesky_psd(const Matrix& a, double jitter = 1e-8);

// Tikhonov-regularised least squares min ||A x - b||^2 + ridge ||x||^2 via the
// SVD. With ridge == 0 the matrix must have full column rank, otherwise a
// ConditioningError is raised.
std::vector<double> ridge_solve(const Matrix& a, std::span<const double> b,
                                double ridge, double rank_tol = kDefaultRankTol);
// Minimum-norm least squares solution, truncating singular values below
// rank_tol * s_max. Never fails on rank-deficient input.
std::vector<double> min_norm_solve(const Matrix& a, std::span<const double> b,
                                   double rank_tol = kDefaultRankTol);

// A probability vector: nonnegative entries summing to one.
class ProbVec {
 public:
  static constexpr double kSumTol = 1e-9;

  ProbVec() = default;
  // Validates the simplex invariant; throws DimensionError otherwise.
  explicit ProbVec(std::vector<double> p, double tol = kSumTol);
  static ProbVec uniform(std::size_t n);
  static ProbVec basis(std::size_t n, std::size_t k);
  // Clips into [0, 1] and renormalises. An all-zero input becomes uniform.
  static ProbVec clip_normalize(std::span<const double> v);

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t i) const { return p_[i]; }
  std::span<const double> values() const { return p_; }
  const std::vector<double>& vector() const { return p_; }

  friend bool operator==(const ProbVec&, const ProbVec&) = default;

 private:
  std::vector<double> p_;
};

double tv_distance(std::span<const double> p, std::span<const double> q);
inline double tv_distance(const ProbVec& p, const ProbVec& q) {
  return tv_distance(p.values(), q.values());
}

// Order-t tensor of side K in last-index-fastest layout. Entries are raw
// reals; moment tensors produced by oracles additionally lie on the simplex
// (check with is_distribution).
class MomentTensor {
 public:
  MomentTensor() = default;
  MomentTensor(int order, std::size_t side);
  MomentTensor(int order, std::size_t side, std::vector<double> entries);

  int order() const { return order_; }
  std::size_t side() const { return side_; }
  std::size_t size() const { return entries_.size(); }

  double& at(std::span<const std::size_t> index);
  double at(std::span<const std::size_t> index) const;
  double& operator[](std::size_t flat) { return entries_[flat]; }
  double operator[](std::size_t flat) const { return entries_[flat]; }
  std::span<const double> entries() const { return entries_; }
  std::span<double> entries() { return entries_; }

  bool is_distribution(double tol) const;
  // Collapses the tensor to its order-1 marginal (sums over all but the
  // first index).
  std::vector<double> first_marginal() const;
  // Mean vector E[w]: for order 1 the entries themselves, for higher orders
  // the first marginal.
  std::vector<double> mean() const { return first_marginal(); }

  friend bool operator==(const MomentTensor&, const MomentTensor&) = default;

 private:
  int order_ = 0;
  std::size_t side_ = 0;
  std::vector<double> entries_;
};

std::size_t int_pow(std::size_t base, int exp);

std::vector<double> vec(const MomentTensor& t);
MomentTensor unvec(std::span<const double> v, int order, std::size_t side);

// (T + T^T) / 2 for order-2 tensors.
MomentTensor symmetrize(const MomentTensor& t);

// Outer power w^{(x) t} as a tensor.
MomentTensor outer_power(std::span<const double> w, int order);

}  // namespace topicssl
