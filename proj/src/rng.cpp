#include "topicssl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "topicssl/error.hpp"

namespace topicssl {

std::uint64_t derive_seed(std::uint64_t master, std::string_view stage) {
  // FNV-1a over the stage name, then mixed with the master seed.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : stage) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return mix64(master ^ mix64(h));
}

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error("Rng::below: empty range");
  // Lemire-style rejection on the top bits.
  const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
  std::uint64_t x;
  do x = next_u64();
  while (x >= limit);
  return x % n;
}

double Rng::normal() {
  // Marsaglia polar method; one of the pair is discarded so that every draw
  // consumes a self-contained block of the counter stream.
  double u, v, s;
  do {
    u = 2.0 * uniform() - 1.0;
    v = 2.0 * uniform() - 1.0;
    s = u * u + v * v;
  } while (s >= 1.0 || s == 0.0);
  return u * std::sqrt(-2.0 * std::log(s) / s);
}

double Rng::log_gamma_variate(double shape) {
  if (!(shape > 0.0)) throw Error("Rng::gamma: shape must be positive");
  if (shape < 1.0) {
    // Gamma(a) = Gamma(a + 1) * U^(1/a), evaluated in log space.
    const double lg = log_gamma_variate(shape + 1.0);
    return lg + std::log(uniform_open()) / shape;
  }
  // Marsaglia and Tsang.
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform_open();
    if (u < 1.0 - 0.0331 * x * x * x * x) return std::log(d * v);
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return std::log(d * v);
  }
}

double Rng::gamma(double shape) { return std::exp(log_gamma_variate(shape)); }

std::uint64_t Rng::poisson(double mean) {
  if (!(mean > 0.0)) throw Error("Rng::poisson: mean must be positive");
  if (mean < 10.0) {
    // Inversion by sequential search.
    const double u = uniform();
    double p = std::exp(-mean);
    double cdf = p;
    std::uint64_t k = 0;
    while (u > cdf) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
      if (p == 0.0 && cdf < u) break;
    }
    return k;
  }
  // PTRS transformed rejection (Hormann 1993).
  const double slam = std::sqrt(mean);
  const double loglam = std::log(mean);
  const double b = 0.931 + 2.53 * slam;
  const double a = -0.059 + 0.02483 * b;
  const double invalpha = 1.1239 + 1.1328 / (b - 3.4);
  const double vr = 0.9277 - 3.6224 / (b - 2.0);
  for (;;) {
    const double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= vr) return static_cast<std::uint64_t>(k);
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(invalpha) - std::log(a / (us * us) + b) <=
        -mean + k * loglam - std::lgamma(k + 1.0)) {
      return static_cast<std::uint64_t>(k);
    }
  }
}

std::vector<double> Rng::dirichlet(std::span<const double> alpha) {
  std::vector<double> lg(alpha.size());
  double mx = -INFINITY;
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    lg[i] = log_gamma_variate(alpha[i]);
    mx = std::max(mx, lg[i]);
  }
  double s = 0.0;
  for (double& x : lg) {
    x = std::exp(x - mx);
    s += x;
  }
  for (double& x : lg) x /= s;
  return lg;
}

std::vector<double> Rng::dirichlet_symmetric(double alpha, std::size_t dim) {
  std::vector<double> a(dim, alpha);
  return dirichlet(a);
}

std::size_t Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw Error("Rng::categorical: weights sum to zero");
  const double u = uniform() * total;
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    acc += weights[i];
    if (u < acc) return i;
  }
  // Rounding fell past the end: return the last index with positive weight.
  for (std::size_t i = weights.size(); i-- > 0;)
    if (weights[i] > 0.0) return i;
  return weights.size() - 1;
}

CategoricalSampler::CategoricalSampler(std::span<const double> weights) : cdf_(weights.size()) {
  double acc = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0)) throw Error("CategoricalSampler: negative weight");
    acc += weights[i];
    cdf_[i] = acc;
  }
  if (!(acc > 0.0)) throw Error("CategoricalSampler: weights sum to zero");
}

std::size_t CategoricalSampler::operator()(Rng& rng) const {
  const double u = rng.uniform() * cdf_.back();
  // upper_bound never lands on a zero-weight entry: its cdf equals its
  // predecessor's.
  auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  if (it == cdf_.end()) it = std::lower_bound(cdf_.begin(), cdf_.end(), cdf_.back());
  return static_cast<std::size_t>(it - cdf_.begin());
}

}  // namespace topicssl
