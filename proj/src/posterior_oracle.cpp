#include "topicssl/posterior_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "topicssl/error.hpp"

namespace topicssl {

namespace {

struct CompactDoc {
  std::vector<std::uint32_t> words;  // distinct words
  std::vector<double> counts;
};

CompactDoc compact(const TopicWordMatrix& a, const Document& x) {
  if (x.counts.size() != a.vocab_size()) throw DimensionError("document vocabulary size does not match A");
  CompactDoc c;
  for (std::size_t v = 0; v < x.counts.size(); ++v) {
    if (x.counts[v] > 0) {
      c.words.push_back(static_cast<std::uint32_t>(v));
      c.counts.push_back(static_cast<double>(x.counts[v]));
    }
  }
  return c;
}

double log_likelihood(const TopicWordMatrix& a, const CompactDoc& doc, std::span<const double> w) {
  const std::size_t K = a.num_topics();
  double ll = 0.0;
  for (std::size_t u = 0; u < doc.words.size(); ++u) {
    const auto row = a.matrix().row(doc.words[u]);
    double p = 0.0;
    for (std::size_t k = 0; k < K; ++k) p += row[k] * w[k];
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    ll += doc.counts[u] * std::log(p);
  }
  return ll;
}

void add_outer_power(std::span<double> acc, std::span<const double> w, int t, double scale) {
  const std::size_t K = w.size();
  if (t == 1) {
    for (std::size_t k = 0; k < K; ++k) acc[k] += scale * w[k];
  } else if (t == 2) {
    for (std::size_t i = 0; i < K; ++i) {
      const double si = scale * w[i];
      for (std::size_t j = 0; j < K; ++j) acc[i * K + j] += si * w[j];
    }
  } else {
    const auto op = outer_power(w, t);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += scale * op[i];
  }
}

// Running self-normalised importance sampling accumulator. Weights are kept
// relative to the largest log-weight seen so far.
class SnisAccumulator {
 public:
  SnisAccumulator(std::size_t K, int t)
      : K_(K), t_(t), tensor_(int_pow(K, t), 0.0), m1_(K, 0.0), q1_(K, 0.0), q2_(K, 0.0) {}

  void add(double log_w, std::span<const double> w) {
    ++n_;
    if (log_w == -std::numeric_limits<double>::infinity()) return;
    if (log_w > shift_) {
      const double r = shift_ == -std::numeric_limits<double>::infinity() ? 0.0 : std::exp(shift_ - log_w);
      rescale(r);
      shift_ = log_w;
    }
    const double e = std::exp(log_w - shift_);
    s_ += e;
    s2_ += e * e;
    add_outer_power(tensor_, w, t_, e);
    for (std::size_t k = 0; k < K_; ++k) {
      m1_[k] += e * w[k];
      q1_[k] += e * e * w[k];
      q2_[k] += e * e * w[k] * w[k];
    }
  }

  std::size_t n() const { return n_; }
  double ess() const { return s2_ > 0.0 ? s_ * s_ / s2_ : 0.0; }
  bool degenerate() const { return !(s_ > 0.0); }

  MomentTensor tensor() const {
    std::vector<double> e(tensor_);
    for (double& x : e) x /= s_;
    return MomentTensor(t_, K_, std::move(e));
  }

  std::vector<double> mean_std_error() const {
    std::vector<double> se(K_);
    for (std::size_t k = 0; k < K_; ++k) {
      const double mu = m1_[k] / s_;
      const double var = (q2_[k] - 2.0 * mu * q1_[k] + mu * mu * s2_) / (s_ * s_);
      se[k] = std::sqrt(std::max(var, 0.0));
    }
    return se;
  }

 private:
  void rescale(double r) {
    s_ *= r;
    s2_ *= r * r;
    for (double& x : tensor_) x *= r;
    for (std::size_t k = 0; k < K_; ++k) {
      m1_[k] *= r;
      q1_[k] *= r * r;
      q2_[k] *= r * r;
    }
  }

  std::size_t K_;
  int t_;
  std::size_t n_ = 0;
  double shift_ = -std::numeric_limits<double>::infinity();
  double s_ = 0.0;
  double s2_ = 0.0;
  std::vector<double> tensor_;
  std::vector<double> m1_, q1_, q2_;
};

MomentTensor diagonal_tensor(std::span<const double> p, int t) {
  const std::size_t K = p.size();
  MomentTensor out(t, K);
  // Offset of (k, k, ..., k) is k * (1 + K + ... + K^{t-1}).
  std::size_t stride = 0;
  for (int i = 0; i < t; ++i) stride = stride * K + 1;
  for (std::size_t k = 0; k < K; ++k) out[k * stride] = p[k];
  return out;
}

}  // namespace

ProbVec pure_posterior(const TopicWordMatrix& a, const Document& x) {
  const std::size_t K = a.num_topics();
  const CompactDoc doc = compact(a, x);
  std::vector<double> logp(K, 0.0);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    double lp = 0.0;
    for (std::size_t u = 0; u < doc.words.size(); ++u) {
      const double avk = a(doc.words[u], k);
      if (avk <= 0.0) {
        lp = -std::numeric_limits<double>::infinity();
        break;
      }
      lp += doc.counts[u] * std::log(avk);
    }
    logp[k] = lp;
    mx = std::max(mx, lp);
  }
  if (mx == -std::numeric_limits<double>::infinity()) {
    throw DegenerateLikelihoodError("pure_posterior: no topic assigns positive probability to every word");
  }
  double s = 0.0;
  for (double& lp : logp) {
    lp = std::exp(lp - mx);
    s += lp;
  }
  for (double& p : logp) p /= s;
  return ProbVec(std::move(logp));
}

PosteriorTensor posterior_moment_tensor(const TopicWordMatrix& a, const PriorSpec& prior,
                                        const Document& x, int t, const OracleConfig& cfg,
                                        std::uint64_t stream) {
  if (t < 1) throw DimensionError("posterior_moment_tensor: t must be >= 1");
  if (prior.num_topics() != a.num_topics()) throw DimensionError("posterior_moment_tensor: K mismatch");
  const std::size_t K = a.num_topics();
  if (prior.is_pure()) {
    const ProbVec p = pure_posterior(a, x);
    PosteriorTensor out{diagonal_tensor(p.values(), t), {}};
    out.estimator.kind = EstimatorInfo::Kind::kExact;
    out.estimator.mean_std_error.assign(K, 0.0);
    return out;
  }
  if (cfg.n_samples == 0) throw DimensionError("posterior_moment_tensor: n_samples must be positive");

  const CompactDoc doc = compact(a, x);
  Rng rng(cfg.seed, stream);
  SnisAccumulator acc(K, t);
  const std::size_t cap = std::max(cfg.max_samples, cfg.n_samples);
  for (;;) {
    for (std::size_t s = 0; s < cfg.n_samples; ++s) {
      const TopicProportions w = sample_w(prior, rng);
      acc.add(log_likelihood(a, doc, w.values()), w.values());
    }
    if (cfg.min_ess == 0 || acc.ess() >= static_cast<double>(cfg.min_ess)) break;
    if (acc.n() + cfg.n_samples > cap) break;
  }
  if (acc.degenerate()) {
    throw DegenerateLikelihoodError("posterior_moment_tensor: every prior sample has zero likelihood");
  }
  PosteriorTensor out{acc.tensor(), {}};
  out.estimator.kind = EstimatorInfo::Kind::kSnis;
  out.estimator.n_samples = acc.n();
  out.estimator.ess = acc.ess();
  out.estimator.low_ess = acc.ess() < cfg.resample_threshold * static_cast<double>(acc.n());
  out.estimator.mean_std_error = acc.mean_std_error();
  return out;
}

MomentTensor prior_moment_tensor(const PriorSpec& prior, int t, const OracleConfig& cfg) {
  if (t < 1) throw DimensionError("prior_moment_tensor: t must be >= 1");
  const std::size_t K = prior.num_topics();
  if (prior.is_pure()) {
    return diagonal_tensor(std::vector<double>(K, 1.0 / static_cast<double>(K)), t);
  }
  if (cfg.n_samples == 0) throw DimensionError("prior_moment_tensor: n_samples must be positive");
  // Distinct stream from the per-document posterior streams.
  Rng rng(derive_seed(cfg.seed, "prior_moments"), 0);
  std::vector<double> acc(int_pow(K, t), 0.0);
  for (std::size_t s = 0; s < cfg.n_samples; ++s) {
    const TopicProportions w = sample_w(prior, rng);
    add_outer_power(acc, w.values(), t, 1.0);
  }
  for (double& v : acc) v /= static_cast<double>(cfg.n_samples);
  return MomentTensor(t, K, std::move(acc));
}

std::vector<double> ideal_reconstruct_predictor(const TopicWordMatrix& a, const PriorSpec& prior,
                                                const Document& x, int t, const OracleConfig& cfg,
                                                std::uint64_t stream) {
  const PosteriorTensor post = posterior_moment_tensor(a, prior, x, t, cfg, stream);
  return kron_power_apply(a.matrix(), t, post.tensor.entries());
}

std::vector<double> kron_row(const TopicWordMatrix& a, std::span<const std::uint32_t> tuple) {
  const std::size_t K = a.num_topics();
  std::vector<double> row{1.0};
  for (auto word : tuple) {
    if (word >= a.vocab_size()) throw DimensionError("kron_row: word id out of range");
    std::vector<double> next(row.size() * K);
    for (std::size_t i = 0; i < row.size(); ++i)
      for (std::size_t k = 0; k < K; ++k) next[i * K + k] = row[i] * a(word, k);
    row = std::move(next);
  }
  return row;
}

double contrastive_g_from_tensors(const TopicWordMatrix& a, std::span<const std::uint32_t> landmark,
                                  const MomentTensor& posterior, const MomentTensor& prior_moments) {
  if (posterior.order() != static_cast<int>(landmark.size()) ||
      prior_moments.order() != static_cast<int>(landmark.size())) {
    throw DimensionError("contrastive_g: tensor order must equal landmark length");
  }
  const auto row = kron_row(a, landmark);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    num += row[i] * posterior[i];
    den += row[i] * prior_moments[i];
  }
  if (!(den > 0.0)) throw DegenerateLandmarkError("contrastive_g: landmark has zero marginal probability");
  return num / den;
}

double ideal_contrastive_g(const TopicWordMatrix& a, const PriorSpec& prior, const Document& x,
                           std::span<const std::uint32_t> landmark, const OracleConfig& cfg,
                           std::uint64_t stream) {
  if (landmark.empty()) throw DimensionError("ideal_contrastive_g: empty landmark");
  if (prior.is_pure()) {
    // Only the diagonal (k, ..., k) of either tensor is nonzero, so the ratio
    // reduces to a K-term sum for landmarks of any length. Evaluated in log
    // space because long landmarks have tiny likelihoods.
    const std::size_t K = a.num_topics();
    const ProbVec post = pure_posterior(a, x);
    std::vector<double> loglik(K, 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      for (auto word : landmark) {
        if (word >= a.vocab_size()) throw DimensionError("ideal_contrastive_g: word id out of range");
        loglik[k] += std::log(a(word, k));
      }
      mx = std::max(mx, loglik[k]);
    }
    if (mx == -std::numeric_limits<double>::infinity()) {
      throw DegenerateLandmarkError("ideal_contrastive_g: landmark has zero marginal probability");
    }
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double l = std::exp(loglik[k] - mx);
      num += post[k] * l;
      den += l / static_cast<double>(K);
    }
    return num / den;
  }
  const int t = static_cast<int>(landmark.size());
  const PosteriorTensor post = posterior_moment_tensor(a, prior, x, t, cfg, stream);
  const MomentTensor pri = prior_moment_tensor(prior, t, cfg);
  return contrastive_g_from_tensors(a, landmark, post.tensor, pri);
}

}  // namespace topicssl
