#include "topicssl/recovery_eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "topicssl/error.hpp"
#include "topicssl/io.hpp"
#include "topicssl/parallel.hpp"

namespace topicssl {

ProbVec RecoveredPosterior::mean() const { return ProbVec::clip_normalize(clipped.first_marginal()); }

RecoveredPosterior clip_recovered(MomentTensor raw) {
  const ProbVec c = ProbVec::clip_normalize(raw.entries());
  RecoveredPosterior r;
  r.clipped = MomentTensor(raw.order(), raw.side(), c.vector());
  r.raw = std::move(raw);
  return r;
}

PosteriorRecovery::PosteriorRecovery(const TopicWordMatrix& a, int t)
    : pinv_(a.pinv()), V_(a.vocab_size()), K_(a.num_topics()), t_(t) {
  if (t < 1) throw DimensionError("recover_posterior: t must be positive");
}

RecoveredPosterior PosteriorRecovery::recover(std::span<const double> f_out) const {
  if (f_out.size() != int_pow(V_, t_)) {
    throw DimensionError("recover_posterior: f has " + std::to_string(f_out.size()) +
                         " entries, expected V^t = " + std::to_string(int_pow(V_, t_)));
  }
  MomentTensor raw = unvec(kron_power_apply(pinv_, t_, f_out), t_, K_);
  return clip_recovered(t_ == 2 ? symmetrize(raw) : std::move(raw));
}

RecoveredPosterior recover_posterior(const TopicWordMatrix& a, std::span<const double> f_out, int t) {
  return PosteriorRecovery(a, t).recover(f_out);
}

std::vector<std::size_t> top_k_indices(std::span<const double> v, std::size_t k) {
  if (k > v.size()) throw DimensionError("top_k: k exceeds the vector length");
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  idx.resize(k);
  return idx;
}

double major_topic_accuracy(std::span<const std::vector<double>> recovered,
                            std::span<const std::vector<double>> truth, std::size_t top_k) {
  if (recovered.size() != truth.size()) throw DimensionError("major_topic_accuracy: length mismatch");
  if (recovered.empty()) throw DimensionError("major_topic_accuracy: no documents");
  if (top_k == 0) throw DimensionError("major_topic_accuracy: top_k must be positive");
  double total = 0.0;
  for (std::size_t i = 0; i < recovered.size(); ++i) {
    auto r = top_k_indices(recovered[i], top_k);
    auto t = top_k_indices(truth[i], top_k);
    std::sort(r.begin(), r.end());
    std::sort(t.begin(), t.end());
    std::vector<std::size_t> both;
    std::set_intersection(r.begin(), r.end(), t.begin(), t.end(), std::back_inserter(both));
    total += static_cast<double>(both.size()) / static_cast<double>(top_k);
  }
  return total / static_cast<double>(recovered.size());
}

MeanCi mean_ci95(std::span<const double> xs) {
  if (xs.empty()) throw DimensionError("mean_ci95: empty sample");
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n)};
}

ProbeFit linear_probe_fit(const Matrix& reps, std::span<const double> targets, double ridge) {
  if (reps.rows() != targets.size()) throw DimensionError("linear_probe_fit: one target per row");
  if (ridge < 0.0) throw DimensionError("linear_probe_fit: ridge must be nonnegative");
  ProbeFit fit;
  fit.rank = numerical_rank(reps);
  if (fit.rank == 0) throw ConditioningError("linear_probe_fit: representations are all zero");
  fit.theta = ridge > 0.0 ? ridge_solve(reps, targets, ridge) : min_norm_solve(reps, targets);
  fit.train_residual = probe_residual(fit, reps, targets);
  return fit;
}

double probe_residual(const ProbeFit& fit, const Matrix& reps, std::span<const double> targets) {
  if (reps.cols() != fit.theta.size() || reps.rows() != targets.size()) {
    throw DimensionError("probe_residual: shape mismatch");
  }
  const auto pred = reps * std::span<const double>(fit.theta);
  double worst = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) worst = std::max(worst, std::abs(pred[i] - targets[i]));
  return worst;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("kl_divergence: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += p[i] * std::log(p[i] / q[i]);
  }
  // Rounding can leave a tiny negative value for p == q.
  return std::max(kl, 0.0);
}

PinskerResult pinsker_check(std::span<const double> p, std::span<const double> p_star, const Matrix& b,
                            KlDirection dir) {
  if (p.size() != p_star.size() || b.cols() != p.size()) throw DimensionError("pinsker_check: shape mismatch");
  std::vector<double> d(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) d[i] = p[i] - p_star[i];
  PinskerResult r;
  for (double x : b * std::span<const double>(d)) r.lhs += std::abs(x);
  r.kl = dir == KlDirection::kForward ? kl_divergence(p, p_star) : kl_divergence(p_star, p);
  if (!std::isfinite(r.kl)) {
    r.rhs = std::numeric_limits<double>::infinity();
    r.vacuous = true;
    r.holds = true;
    return r;
  }
  r.rhs = l1_cond_number(b) * std::sqrt(2.0 * r.kl);
  r.holds = r.lhs <= r.rhs + 1e-12;
  return r;
}

PolynomialTarget PolynomialTarget::monomial(std::size_t K, int t, std::span<const std::size_t> z) {
  if (t < 1 || z.size() > static_cast<std::size_t>(t)) {
    throw DimensionError("PolynomialTarget: degree exceeds t");
  }
  for (auto k : z) {
    if (k >= K) throw DimensionError("PolynomialTarget: topic index out of range");
  }
  PolynomialTarget p;
  p.t = t;
  p.K = K;
  p.beta.assign(int_pow(K, t), 0.0);
  // Free positions (beyond |z|) range over all topics: multiplying by
  // (sum_j w_j)^{t-|z|} = 1 leaves the polynomial unchanged.
  const std::size_t free = int_pow(K, t - static_cast<int>(z.size()));
  std::size_t head = 0;
  for (auto k : z) head = head * K + k;
  for (std::size_t tail = 0; tail < free; ++tail) p.beta[head * free + tail] = 1.0;
  return p;
}

double PolynomialTarget::evaluate(const MomentTensor& moments) const {
  if (moments.size() != beta.size()) throw DimensionError("PolynomialTarget: tensor size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < beta.size(); ++i) s += beta[i] * moments[i];
  return s;
}

double PolynomialTarget::norm() const {
  double s = 0.0;
  for (double b : beta) s += b * b;
  return std::sqrt(s);
}

namespace {

// Absolute slack for roundoff: an exact predictor gives lhs ~ 1e-32, bound 0.
constexpr double kAuditSlack = 1e-12;

}  // namespace

RobustnessReport robustness_audit(const TopicWordMatrix& a, const PriorSpec& prior,
                                  std::span<const std::vector<double>> f_outputs,
                                  const PolynomialTarget& poly, std::span<const Document> test_docs,
                                  const RobustnessConfig& cfg) {
  if (f_outputs.size() != test_docs.size()) throw DimensionError("robustness_audit: one output per document");
  if (test_docs.empty()) throw DimensionError("robustness_audit: no documents");
  const int t = poly.t;
  if (poly.K != a.num_topics()) throw DimensionError("robustness_audit: polynomial K differs from A");

  RobustnessReport rep;
  rep.t = t;
  rep.beta_norm = poly.norm();
  rep.kappa = l1_cond_number(a.pinv());
  const double factor = 2.0 * rep.beta_norm * rep.beta_norm * std::pow(rep.kappa, 2 * t);

  const std::size_t n = test_docs.size();
  rep.per_doc_lhs.assign(n, 0.0);
  rep.per_doc_epsilon.assign(n, 0.0);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    const PosteriorTensor post = posterior_moment_tensor(a, prior, test_docs[i], t, cfg.oracle, i);
    const auto f_star = kron_power_apply(a.matrix(), t, post.tensor.entries());
    if (f_outputs[i].size() != f_star.size()) throw DimensionError("robustness_audit: output size is not V^t");
    const MomentTensor w_hat(t, a.num_topics(), kron_power_apply(a.pinv(), t, f_outputs[i]));
    const double diff = poly.evaluate(post.tensor) - poly.evaluate(w_hat);
    rep.per_doc_lhs[i] = diff * diff;
    rep.per_doc_epsilon[i] = kl_divergence(f_star, f_outputs[i]);
  });

  const MeanCi lhs = mean_ci95(rep.per_doc_lhs);
  const MeanCi eps = mean_ci95(rep.per_doc_epsilon);
  rep.lhs = lhs.mean;
  rep.lhs_se = lhs.ci95 / 1.96;
  rep.epsilon = eps.mean;
  rep.epsilon_se = eps.ci95 / 1.96;
  rep.bound = factor * rep.epsilon;
  rep.holds = rep.lhs <= rep.bound + kAuditSlack;

  if (cfg.bootstrap > 0) {
    Rng rng(derive_seed(cfg.seed, "bootstrap"));
    std::size_t held = 0;
    for (std::size_t b = 0; b < cfg.bootstrap; ++b) {
      double sl = 0.0, se = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const auto i = static_cast<std::size_t>(rng.below(n));
        sl += rep.per_doc_lhs[i];
        se += rep.per_doc_epsilon[i];
      }
      if (sl / static_cast<double>(n) <= factor * se / static_cast<double>(n) + kAuditSlack) ++held;
    }
    rep.bootstrap_hold_rate = static_cast<double>(held) / static_cast<double>(cfg.bootstrap);
  }
  return rep;
}

namespace {

// Separates the oracle streams of assumed priors from those of the reference.
constexpr std::uint64_t kAssumedStreamOffset = std::uint64_t{1} << 40;

}  // namespace

BenchmarkResult misspecification_benchmark(const TopicWordMatrix& a, const PriorSpec& true_prior,
                                           std::span<const PriorSpec> assumed_priors,
                                           std::span<const std::vector<double>> ssl_means,
                                           std::span<const Document> test_docs,
                                           const BenchmarkConfig& cfg) {
  const std::size_t n = test_docs.size();
  if (n == 0) throw DimensionError("misspecification_benchmark: no documents");
  if (!ssl_means.empty() && ssl_means.size() != n) {
    throw DimensionError("misspecification_benchmark: one SSL recovery per document");
  }
  BenchmarkResult out;
  out.truth.resize(n);
  std::vector<double> ess(n, 0.0);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    const auto post = posterior_moment_tensor(a, true_prior, test_docs[i], 1, cfg.oracle, i);
    out.truth[i] = post.mean();
    ess[i] = post.estimator.ess;
  });
  if (!true_prior.is_pure()) out.truth_min_ess = *std::min_element(ess.begin(), ess.end());

  auto add_rows = [&](const std::string& method, const std::string& assumed,
                      const std::vector<std::vector<double>>& means, double min_ess) {
    std::vector<double> tv(n);
    for (std::size_t i = 0; i < n; ++i) tv[i] = tv_distance(means[i], out.truth[i]);
    const MeanCi tvc = mean_ci95(tv);
    for (std::size_t k : cfg.top_k) {
      std::vector<double> acc(n);
      for (std::size_t i = 0; i < n; ++i) {
        acc[i] = major_topic_accuracy(std::span(means).subspan(i, 1), std::span(out.truth).subspan(i, 1), k);
      }
      const MeanCi ac = mean_ci95(acc);
      EvalReport r;
      r.method = method;
      r.prior_true = true_prior.tag();
      r.prior_assumed = assumed;
      r.alpha = cfg.alpha;
      r.n_docs = n;
      r.tv = tv;
      r.tv_mean = tvc.mean;
      r.tv_ci95 = tvc.ci95;
      r.topk = k;
      r.acc_mean = ac.mean;
      r.acc_ci95 = ac.ci95;
      r.seed = cfg.seed;
      r.min_ess = min_ess;
      out.rows.push_back(std::move(r));
    }
  };

  if (!ssl_means.empty()) {
    add_rows("ssl", "none", std::vector<std::vector<double>>(ssl_means.begin(), ssl_means.end()), 0.0);
  }
  for (std::size_t j = 0; j < assumed_priors.size(); ++j) {
    const PriorSpec& prior = assumed_priors[j];
    std::vector<std::vector<double>> means(n);
    std::vector<double> aess(n, 0.0);
    parallel_for(n, cfg.threads, [&](std::size_t i) {
      const auto post = posterior_moment_tensor(a, prior, test_docs[i], 1, cfg.oracle,
                                                i + (j + 1) * kAssumedStreamOffset);
      means[i] = post.mean();
      aess[i] = post.estimator.ess;
    });
    add_rows("oracle", prior.tag(), means, prior.is_pure() ? 0.0 : *std::min_element(aess.begin(), aess.end()));
  }
  return out;
}

std::string eval_report_csv(std::span<const EvalReport> rows, int digits) {
  std::ostringstream out;
  out << "method,prior_true,prior_assumed,alpha,n_docs,tv_mean,tv_ci95,topk,acc_mean,acc_ci95,seed\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.prior_true << ',' << r.prior_assumed << ',' << format_double(r.alpha) << ','
        << r.n_docs << ',' << format_fixed(r.tv_mean, digits) << ',' << format_fixed(r.tv_ci95, digits) << ','
        << r.topk << ',' << format_fixed(r.acc_mean, digits) << ',' << format_fixed(r.acc_ci95, digits) << ','
        << r.seed << '\n';
  }
  return out.str();
}

std::string robustness_csv(std::span<const RobustnessReport> rows) {
  std::ostringstream out;
  out << "epsilon,beta_norm,kappa,t,bound,lhs,holds\n";
  for (const auto& r : rows) {
    out << format_double(r.epsilon) << ',' << format_double(r.beta_norm) << ',' << format_double(r.kappa) << ','
        << r.t << ',' << format_double(r.bound) << ',' << format_double(r.lhs) << ',' << (r.holds ? 1 : 0)
        << '\n';
  }
  return out.str();
}

}  // namespace topicssl
