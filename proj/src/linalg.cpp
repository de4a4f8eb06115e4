#include "topicssl/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "topicssl/error.hpp"

namespace topicssl {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> row_major)
    : rows_(rows), cols_(cols), data_(std::move(row_major)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Matrix: expected " + std::to_string(rows * cols) +
                         " entries, got " + std::to_string(data_.size()));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw DimensionError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::diagonal(std::span<const double> d) {
  Matrix m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

Matrix Matrix::column(std::span<const double> v) {
  return Matrix(v.size(), 1, std::vector<double>(v.begin(), v.end()));
}

std::vector<double> Matrix::col(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ci = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto bk = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix c = a;
  for (auto& x : c.data()) x *= s;
  return c;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("matrix add: shape mismatch");
  Matrix c = a;
  auto cd = c.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < cd.size(); ++i) cd[i] += bd[i];
  return c;
}

Matrix operator-(const Matrix& a, const Matrix& b) { return a + (-1.0) * b; }

std::vector<double> operator*(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) throw DimensionError("matvec: shape mismatch");
  std::vector<double> y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto ai = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < ai.size(); ++j) acc += ai[j] * x[j];
    y[i] = acc;
  }
  return y;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("max_abs_diff: size mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw DimensionError("max_abs_diff: shape mismatch");
  return max_abs_diff(a.data(), b.data());
}

Matrix kron(const Matrix& a, const Matrix& b, std::size_t max_entries) {
  const std::size_t rows = a.rows() * b.rows();
  const std::size_t cols = a.cols() * b.cols();
  if (cols != 0 && rows > max_entries / cols) {
    throw SizeLimitError("kron: result " + std::to_string(rows) + "x" + std::to_string(cols) +
                         " exceeds " + std::to_string(max_entries) + " entries");
  }
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) {
      const double aij = a(i, j);
      for (std::size_t k = 0; k < b.rows(); ++k)
        for (std::size_t l = 0; l < b.cols(); ++l)
          out(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
    }
  return out;
}

Matrix kron_power(const Matrix& a, int power, std::size_t max_entries) {
  if (power < 1) throw DimensionError("kron_power: power must be >= 1");
  Matrix out = a;
  for (int p = 1; p < power; ++p) out = kron(out, a, max_entries);
  return out;
}

std::size_t int_pow(std::size_t base, int exp) {
  std::size_t r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

std::vector<double> kron_power_apply(const Matrix& m, int power, std::span<const double> x) {
  if (power < 1) throw DimensionError("kron_power_apply: power must be >= 1");
  const std::size_t c = m.cols();
  const std::size_t r = m.rows();
  if (x.size() != int_pow(c, power)) throw DimensionError("kron_power_apply: input length mismatch");

  // Mode products, one tensor axis at a time. Axis `mode` has already-mapped
  // axes (length r) before it and untouched axes (length c) after it.
  std::vector<double> cur(x.begin(), x.end());
  for (int mode = 0; mode < power; ++mode) {
    const std::size_t pre = int_pow(r, mode);
    const std::size_t post = int_pow(c, power - mode - 1);
    std::vector<double> next(pre * r * post, 0.0);
    for (std::size_t p = 0; p < pre; ++p)
      for (std::size_t a = 0; a < r; ++a) {
        double* dst = next.data() + (p * r + a) * post;
        for (std::size_t b = 0; b < c; ++b) {
          const double mab = m(a, b);
          if (mab == 0.0) continue;
          const double* src = cur.data() + (p * c + b) * post;
          for (std::size_t q = 0; q < post; ++q) dst[q] += mab * src[q];
        }
      }
    cur = std::move(next);
  }
  return cur;
}

namespace {

Svd jacobi_svd_tall(const Matrix& a) {
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();
  // Column-major working copy.
  std::vector<std::vector<double>> w(n, std::vector<double>(m));
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) w[j][i] = a(i, j);
  std::vector<std::vector<double>> v(n, std::vector<double>(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) v[j][j] = 1.0;

  constexpr double eps = std::numeric_limits<double>::epsilon();
  constexpr int kMaxSweeps = 80;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        const double* wp = w[p].data();
        const double* wq = w[q].data();
        for (std::size_t i = 0; i < m; ++i) {
          alpha += wp[i] * wp[i];
          beta += wq[i] * wq[i];
          gamma += wp[i] * wq[i];
        }
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = w[p][i];
          const double y = w[q][i];
          w[p][i] = cs * x - sn * y;
          w[q][i] = sn * x + cs * y;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double x = v[p][i];
          const double y = v[q][i];
          v[p][i] = cs * x - sn * y;
          v[q][i] = sn * x + cs * y;
        }
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (double x : w[j]) s += x * x;
    sigma[j] = std::sqrt(s);
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return sigma[i] > sigma[j]; });

  Svd out{Matrix(m, n), std::vector<double>(n), Matrix(n, n)};
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.s[k] = sigma[j];
    for (std::size_t i = 0; i < m; ++i) out.u(i, k) = sigma[j] > 0.0 ? w[j][i] / sigma[j] : 0.0;
    for (std::size_t i = 0; i < n; ++i) out.v(i, k) = v[j][i];
  }
  return out;
}

}  // namespace

Svd svd(const Matrix& a) {
  if (a.empty()) throw DimensionError("svd: empty matrix");
  if (!a.all_finite()) throw DimensionError("svd: non-finite entries");
  if (a.rows() >= a.cols()) return jacobi_svd_tall(a);
  Svd t = jacobi_svd_tall(a.transpose());
  return Svd{std::move(t.v), std::move(t.s), std::move(t.u)};
}

std::size_t numerical_rank(const Matrix& a, double tol) {
  const Svd d = svd(a);
  if (d.s.empty() || d.s.front() == 0.0) return 0;
  return static_cast<std::size_t>(std::count_if(
      d.s.begin(), d.s.end(), [&](double s) { return s > tol * d.s.front(); }));
}

Matrix pinv_left(const Matrix& a, double tol) {
  if (a.rows() < a.cols()) {
    throw RankError("pinv_left: matrix has more columns than rows", 0.0);
  }
  const Svd d = svd(a);
  const double smax = d.s.front();
  const double smin = d.s.back();
  if (!(smax > 0.0) || !(smin > tol * smax)) {
    throw RankError("pinv_left: rank deficient (smallest singular value " + std::to_string(smin) +
                        ", largest " + std::to_string(smax) + ")",
                    smin);
  }
  const std::size_t n = a.cols();
  const std::size_t m = a.rows();
  Matrix out(n, m);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const double vik = d.v(i, k) / d.s[k];
      for (std::size_t j = 0; j < m; ++j) out(i, j) += vik * d.u(j, k);
    }
  return out;
}

double l1_cond_number(const Matrix& b) {
  double best = 0.0;
  for (std::size_t c = 0; c < b.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < b.rows(); ++r) s += std::abs(b(r, c));
    best = std::max(best, s);
  }
  return best;
}

namespace {

bool try_cholesky(const Matrix& a, Matrix& l) {
  const std::size_t n = a.rows();
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i) scale = std::max(scale, std::abs(a(i, i)));
  if (scale == 0.0) scale = 1.0;
  const double pivot_tol = 1e-12 * scale;
  const double residual_tol = 1e-9 * scale;
  l = Matrix(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (d > pivot_tol) {
      const double ljj = std::sqrt(d);
      l(j, j) = ljj;
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
        l(i, j) = s / ljj;
      }
    } else if (d >= -pivot_tol) {
      // Zero pivot: the remainder of the column must vanish as well.
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
        if (std::abs(s) > residual_tol) return false;
      }
    } else {
      return false;
    }
  }
  return true;
}

}  // namespace

Matrix cholesky_psd(const Matrix& a, double jitter) {
  if (a.rows() != a.cols()) throw DimensionError("cholesky_psd: matrix not square");
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (std::abs(a(i, j) - a(j, i)) > 1e-12 * (1.0 + std::abs(a(i, j))))
        throw NotPositiveSemidefiniteError("cholesky_psd: matrix not symmetric");
  Matrix l;
  if (try_cholesky(a, l)) return l;
  Matrix jittered = a;
  for (std::size_t i = 0; i < a.rows(); ++i) jittered(i, i) += jitter;
  if (try_cholesky(jittered, l)) return l;
  throw NotPositiveSemidefiniteError("cholesky_psd: matrix is not positive semidefinite");
}

std::vector<double> ridge_solve(const Matrix& a, std::span<const double> b, double ridge,
                                double rank_tol) {
  if (a.rows() != b.size()) throw DimensionError("ridge_solve: rhs length mismatch");
  if (ridge < 0.0) throw DimensionError("ridge_solve: ridge must be nonnegative");
  const Svd d = svd(a);
  if (ridge == 0.0) {
    if (a.rows() < a.cols() || !(d.s.back() > rank_tol * d.s.front())) {
      throw ConditioningError(
          "ridge_solve: normal equations are singular at ridge = 0 (smallest singular value " +
          std::to_string(d.s.back()) + "); use a positive ridge");
    }
  }
  const std::size_t r = d.s.size();
  std::vector<double> x(a.cols(), 0.0);
  for (std::size_t k = 0; k < r; ++k) {
    double ub = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) ub += d.u(i, k) * b[i];
    const double s = d.s[k];
    const double coef = ridge == 0.0 ? ub / s : ub * s / (s * s + ridge);
    for (std::size_t i = 0; i < a.cols(); ++i) x[i] += coef * d.v(i, k);
  }
  return x;
}

std::vector<double> min_norm_solve(const Matrix& a, std::span<const double> b, double rank_tol) {
  if (a.rows() != b.size()) throw DimensionError("min_norm_solve: rhs length mismatch");
  const Svd d = svd(a);
  std::vector<double> x(a.cols(), 0.0);
  if (d.s.front() == 0.0) return x;
  for (std::size_t k = 0; k < d.s.size(); ++k) {
    if (!(d.s[k] > rank_tol * d.s.front())) break;
    double ub = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i) ub += d.u(i, k) * b[i];
    const double coef = ub / d.s[k];
    for (std::size_t i = 0; i < a.cols(); ++i) x[i] += coef * d.v(i, k);
  }
  return x;
}

ProbVec::ProbVec(std::vector<double> p, double tol) : p_(std::move(p)) {
  if (p_.empty()) throw DimensionError("ProbVec: empty");
  double s = 0.0;
  for (double x : p_) {
    if (!std::isfinite(x) || x < 0.0) throw DimensionError("ProbVec: negative or non-finite entry");
    s += x;
  }
  if (std::abs(s - 1.0) > tol) {
    throw DimensionError("ProbVec: entries sum to " + std::to_string(s));
  }
}

ProbVec ProbVec::uniform(std::size_t n) {
  return ProbVec(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

ProbVec ProbVec::basis(std::size_t n, std::size_t k) {
  std::vector<double> p(n, 0.0);
  p.at(k) = 1.0;
  return ProbVec(std::move(p));
}

ProbVec ProbVec::clip_normalize(std::span<const double> v) {
  std::vector<double> p(v.size());
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    p[i] = std::isfinite(v[i]) ? std::clamp(v[i], 0.0, 1.0) : 0.0;
    s += p[i];
  }
  if (s <= 0.0) return uniform(v.size());
  for (double& x : p) x /= s;
  return ProbVec(std::move(p));
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw DimensionError("tv_distance: dimension mismatch (" + std::to_string(p.size()) + " vs " +
                         std::to_string(q.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

MomentTensor::MomentTensor(int order, std::size_t side)
    : order_(order), side_(side), entries_(int_pow(side, order), 0.0) {
  if (order < 1 || side < 1) throw DimensionError("MomentTensor: order and side must be >= 1");
}

MomentTensor::MomentTensor(int order, std::size_t side, std::vector<double> entries)
    : order_(order), side_(side), entries_(std::move(entries)) {
  if (order < 1 || side < 1) throw DimensionError("MomentTensor: order and side must be >= 1");
  if (entries_.size() != int_pow(side, order)) throw DimensionError("MomentTensor: size mismatch");
}

namespace {
std::size_t flat_index(std::span<const std::size_t> index, int order, std::size_t side) {
  if (index.size() != static_cast<std::size_t>(order)) throw DimensionError("MomentTensor: index arity");
  std::size_t f = 0;
  for (std::size_t z : index) {
    if (z >= side) throw DimensionError("MomentTensor: index out of range");
    f = f * side + z;
  }
  return f;
}
}  // namespace

double& MomentTensor::at(std::span<const std::size_t> index) {
  return entries_[flat_index(index, order_, side_)];
}

double MomentTensor::at(std::span<const std::size_t> index) const {
  return entries_[flat_index(index, order_, side_)];
}

bool MomentTensor::is_distribution(double tol) const {
  double s = 0.0;
  for (double x : entries_) {
    if (!(x >= -tol)) return false;
    s += x;
  }
  return std::abs(s - 1.0) <= tol;
}

std::vector<double> MomentTensor::first_marginal() const {
  const std::size_t chunk = entries_.size() / side_;
  std::vector<double> m(side_, 0.0);
  for (std::size_t z = 0; z < side_; ++z)
    for (std::size_t j = 0; j < chunk; ++j) m[z] += entries_[z * chunk + j];
  return m;
}

std::vector<double> vec(const MomentTensor& t) {
  return std::vector<double>(t.entries().begin(), t.entries().end());
}

MomentTensor unvec(std::span<const double> v, int order, std::size_t side) {
  if (order < 1 || side < 1 || v.size() != int_pow(side, order)) {
    throw DimensionError("unvec: vector of length " + std::to_string(v.size()) +
                         " does not match order " + std::to_string(order) + ", side " +
                         std::to_string(side));
  }
  return MomentTensor(order, side, std::vector<double>(v.begin(), v.end()));
}

MomentTensor symmetrize(const MomentTensor& t) {
  if (t.order() != 2) throw DimensionError("symmetrize: only order-2 tensors are supported");
  const std::size_t k = t.side();
  MomentTensor out(2, k);
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j) {
      const double s = 0.5 * (t[i * k + j] + t[j * k + i]);
      out[i * k + j] = s;
      out[j * k + i] = s;
    }
  return out;
}

MomentTensor outer_power(std::span<const double> w, int order) {
  MomentTensor out(order, w.size());
  const std::size_t k = w.size();
  auto e = out.entries();
  e[0] = 1.0;
  std::size_t len = 1;
  // Expand one axis at a time, keeping last-index-fastest order.
  std::vector<double> buf;
  for (int o = 0; o < order; ++o) {
    buf.assign(e.begin(), e.begin() + len);
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t z = 0; z < k; ++z) e[i * k + z] = buf[i] * w[z];
    len *= k;
  }
  return out;
}

}  // namespace topicssl
