#pragma once

// Counter-based random numbers. A generator is identified by a 64-bit key
// derived from (seed, stream id); the n-th draw is a bijective mix of
// key and n, so any stream can be reproduced without replaying its
// neighbours. All distributions are implemented here rather than taken from
// <random>, whose algorithms are implementation-defined, so that corpora are
// identical across standard libraries.

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace topicssl {

// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Derives a named sub-seed, e.g. derive_seed(master, "train_corpus").
std::uint64_t derive_seed(std::uint64_t master, std::string_view stage);

class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(mix64(seed) ^ mix64(~stream + 0x632BE59BD9B4E019ULL)) {}

  // Independent child stream.
  Rng split(std::uint64_t id) const { return Rng(key_, id); }

  std::uint64_t next_u64() { return mix64(key_ ^ mix64(counter_++)); }
  std::uint64_t counter() const { return counter_; }

  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  // Uniform on (0, 1).
  double uniform_open() {
    double u;
    do u = uniform();
    while (u == 0.0);
    return u;
  }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  double normal();
  // log of a Gamma(shape, 1) variate; stable for tiny shapes.
  double log_gamma_variate(double shape);
  double gamma(double shape);
  std::uint64_t poisson(double mean);

  // Symmetric or general Dirichlet draw, normalised in log space so that
  // small concentrations do not underflow to an all-zero vector.
  std::vector<double> dirichlet(std::span<const double> alpha);
  std::vector<double> dirichlet_symmetric(double alpha, std::size_t dim);

  // Index drawn from unnormalised nonnegative weights.
  std::size_t categorical(std::span<const double> weights);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Sampler over a fixed distribution via cumulative sums and binary search.
class CategoricalSampler {
 public:
  explicit CategoricalSampler(std::span<const double> weights);
  std::size_t operator()(Rng& rng) const;
  std::size_t size() const { return cdf_.size(); }

 private:
  std::vector<double> cdf_;
};

}  // namespace topicssl
