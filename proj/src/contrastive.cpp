#include "topicssl/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "topicssl/error.hpp"
#include "topicssl/io.hpp"
#include "topicssl/parallel.hpp"
#include "topicssl/reconstruct.hpp"

namespace topicssl {

namespace {

std::vector<std::uint32_t> draw_tuple(const TopicWordMatrix& a, const TopicProportions& w, int t, Rng& rng) {
  const CategoricalSampler sampler(a.word_distribution(w.values()));
  std::vector<std::uint32_t> out(static_cast<std::size_t>(t));
  for (auto& y : out) y = static_cast<std::uint32_t>(sampler(rng));
  return out;
}

}  // namespace

std::vector<ContrastivePair> make_pairs(const TopicWordMatrix& a, const PriorSpec& prior, int t,
                                        std::size_t n_pairs, const GenConfig& gen,
                                        std::uint64_t seed, int threads) {
  if (n_pairs == 0) throw DimensionError("make_pairs: n_pairs must be positive");
  if (t < 1) throw DimensionError("make_pairs: t must be positive");
  std::vector<ContrastivePair> out(n_pairs);
  parallel_for(n_pairs, threads, [&](std::size_t i) {
    Rng rng(seed, i);
    ContrastivePair& p = out[i];
    p.w = sample_w(prior, rng);
    p.x = sample_document(a, p.w, gen, rng);
    p.label = rng.uniform() < 0.5 ? 1 : 0;
    if (p.label == 1) {
      p.x_prime = draw_tuple(a, p.w, t, rng);
      return;
    }
    TopicProportions wp = sample_w(prior, rng);
    while (wp == p.w && p.rejections < kMaxNegativeRejections) {
      ++p.rejections;
      wp = sample_w(prior, rng);
    }
    p.x_prime = draw_tuple(a, wp, t, rng);
    p.w_prime = std::move(wp);
  });
  return out;
}

Eigen::MatrixXd encode_pairs(std::span<const Document* const> xs,
                             std::span<const std::vector<std::uint32_t>* const> primes, std::size_t V) {
  if (xs.size() != primes.size()) throw DimensionError("encode_pairs: size mismatch");
  const std::size_t t = primes.empty() ? 0 : primes[0]->size();
  Eigen::MatrixXd in = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(V * (1 + t)),
                                             static_cast<Eigen::Index>(xs.size()));
  in.topRows(static_cast<Eigen::Index>(V)) = encode_documents(xs, V);
  for (std::size_t c = 0; c < primes.size(); ++c) {
    if (primes[c]->size() != t) throw DimensionError("encode_pairs: ragged x' tuples");
    for (std::size_t j = 0; j < t; ++j) {
      const auto y = (*primes[c])[j];
      if (y >= V) throw DimensionError("encode_pairs: word id out of range");
      in(static_cast<Eigen::Index>(V * (1 + j) + y), static_cast<Eigen::Index>(c)) = 1.0;
    }
  }
  return in;
}

MlpModel make_contrastive_model(std::size_t V, const TrainConfig& cfg) {
  MlpShape s;
  s.input_dim = V * (1 + static_cast<std::size_t>(cfg.t));
  s.width = cfg.width;
  s.num_blocks = cfg.num_blocks;
  s.output_dim = 1;
  s.activation = cfg.activation;
  s.head = OutputHead::kSigmoid;
  return MlpModel(s, derive_seed(cfg.seed, "init"));
}

namespace {

std::size_t vocab_of(const MlpModel& model, std::size_t t) {
  return model.shape().input_dim / (1 + t);
}

Eigen::MatrixXd encode_batch(std::span<const ContrastivePair> batch, std::size_t V) {
  std::vector<const Document*> xs;
  std::vector<const std::vector<std::uint32_t>*> ps;
  for (const auto& p : batch) {
    xs.push_back(&p.x);
    ps.push_back(&p.x_prime);
  }
  return encode_pairs(xs, ps, V);
}

}  // namespace

double classify(const MlpModel& model, const Document& x, std::span<const std::uint32_t> x_prime) {
  const std::vector<std::uint32_t> prime(x_prime.begin(), x_prime.end());
  const Document* xs[] = {&x};
  const std::vector<std::uint32_t>* ps[] = {&prime};
  return model.forward(encode_pairs(xs, ps, vocab_of(model, prime.size())))(0, 0);
}

ContrastiveLoss contrastive_loss_and_grad(const MlpModel& model, std::span<const ContrastivePair> batch) {
  if (batch.empty()) throw DimensionError("contrastive_loss_and_grad: empty batch");
  const std::size_t V = vocab_of(model, batch[0].x_prime.size());
  MlpModel::Tape tape;
  const Eigen::MatrixXd z = model.logits(encode_batch(batch, V), &tape);
  Eigen::MatrixXd dz(1, z.cols());
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    const double f = 1.0 / (1.0 + std::exp(-z(0, c)));
    const double r = f - static_cast<double>(batch[static_cast<std::size_t>(c)].label);
    loss += r * r;
    dz(0, c) = 2.0 * r * f * (1.0 - f) * inv;
  }
  return {loss * inv, model.backward(tape, dz)};
}

double contrastive_mean_loss(const MlpModel& model, std::span<const ContrastivePair> pairs) {
  if (pairs.empty()) throw DimensionError("contrastive_mean_loss: no pairs");
  const std::size_t V = vocab_of(model, pairs[0].x_prime.size());
  constexpr std::size_t kChunk = 512;
  double total = 0.0;
  for (std::size_t start = 0; start < pairs.size(); start += kChunk) {
    const auto chunk = pairs.subspan(start, std::min(kChunk, pairs.size() - start));
    const Eigen::MatrixXd f = model.forward(encode_batch(chunk, V));
    for (std::size_t c = 0; c < chunk.size(); ++c) {
      const double r = f(0, static_cast<Eigen::Index>(c)) - chunk[c].label;
      total += r * r;
    }
  }
  return total / static_cast<double>(pairs.size());
}

ContrastiveTrainer::ContrastiveTrainer(MlpModel& model, std::span<const ContrastivePair> pairs,
                                       std::span<const ContrastivePair> val, const TrainConfig& cfg,
                                       std::optional<TrainState> resume)
    : model_(model), pairs_(pairs), val_(val), cfg_(cfg) {
  cfg_.validate();
  if (pairs.empty()) throw DimensionError("train_contrastive: no pairs");
  if (model.shape().head != OutputHead::kSigmoid) {
    throw DimensionError("train_contrastive: model needs a sigmoid head");
  }
  const std::size_t n = model.num_parameters();
  opt_ = AmsGrad(n, cfg.optimizer);
  if (resume) {
    state_ = std::move(*resume);
    if (static_cast<std::size_t>(state_.adam_m.size()) != n) {
      throw DimensionError("train_contrastive: resume state does not match the model");
    }
    opt_.m = state_.adam_m;
    opt_.v = state_.adam_v;
    opt_.v_max = state_.adam_v_max;
    opt_.set_steps(state_.adam_steps);
  } else {
    state_.lr = cfg.learning_rate;
    state_.initial_loss = contrastive_mean_loss(model, val.empty() ? pairs : val);
    state_.best_val = state_.initial_loss;
  }
}

EpochRecord ContrastiveTrainer::run_epoch() {
  const std::size_t epoch = state_.epochs_done;
  std::vector<std::size_t> order(pairs_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng shuffle_rng(derive_seed(cfg_.seed, "contrastive_shuffle"), epoch);
  shuffle_rng.shuffle(order);

  double loss_sum = 0.0;
  std::vector<ContrastivePair> batch;
  for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
    const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(pairs_[order[i]]);
    auto lg = contrastive_loss_and_grad(model_, batch);
    loss_sum += lg.loss * static_cast<double>(batch.size());
    opt_.step(model_.parameters(), std::move(lg.grad), state_.lr);
  }
  if (!model_.parameters_finite()) throw ModelCorruptError("training produced non-finite parameters");

  EpochRecord rec;
  rec.epoch = epoch + 1;
  rec.train_loss = loss_sum / static_cast<double>(pairs_.size());
  rec.val_loss = val_.empty() ? rec.train_loss : contrastive_mean_loss(model_, val_);
  rec.lr = state_.lr;
  finish_epoch(state_, rec, cfg_.lr_halve_patience);
  return rec;
}

TrainState ContrastiveTrainer::state() const {
  TrainState s = state_;
  s.adam_m = opt_.m;
  s.adam_v = opt_.v;
  s.adam_v_max = opt_.v_max;
  s.adam_steps = opt_.steps();
  return s;
}

std::vector<EpochRecord> train_contrastive(MlpModel& model, std::span<const ContrastivePair> pairs,
                                           const TrainConfig& cfg, std::span<const ContrastivePair> val) {
  if (cfg.epochs == 0) return {};
  ContrastiveTrainer trainer(model, pairs, val, cfg);
  while (!trainer.done()) trainer.run_epoch();
  return trainer.state().history;
}

double pure_bayes_classifier(const TopicWordMatrix& a, const Document& x,
                             std::span<const std::uint32_t> x_prime) {
  const std::size_t K = a.num_topics();
  if (K == 1) return 0.5;
  const ProbVec post = pure_posterior(a, x);
  std::vector<double> lik(K, 1.0);
  double total = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    for (auto y : x_prime) lik[k] *= a(y, k);
    total += lik[k];
  }
  double pos = 0.0, neg = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    pos += post[k] * lik[k];
    neg += post[k] * (total - lik[k]) / static_cast<double>(K - 1);
  }
  if (!(pos + neg > 0.0)) throw DegenerateLandmarkError("pure_bayes_classifier: x' has zero probability");
  return pos / (pos + neg);
}

double g_transform(double f, double clamp) {
  if (!(clamp > 0.0 && clamp < 0.5)) throw DimensionError("g_transform: clamp must lie in (0, 0.5)");
  f = std::clamp(f, clamp, 1.0 - clamp);
  return f / (1.0 - f);
}

double pure_rejection_to_ratio(double g, std::size_t K) {
  if (K <= 1) return g;
  const double k = static_cast<double>(K);
  return k * g / (k - 1.0 + g);
}

LandmarkSet make_landmark_set(const TopicWordMatrix& a, const PriorSpec& prior,
                              std::vector<std::vector<std::uint32_t>> tuples, const OracleConfig& cfg) {
  if (tuples.empty()) throw DimensionError("landmarks: empty set");
  LandmarkSet lm;
  lm.t = static_cast<int>(tuples[0].size());
  if (lm.t < 1) throw DimensionError("landmarks: empty tuple");
  std::set<std::vector<std::uint32_t>> seen;
  for (const auto& l : tuples) {
    if (static_cast<int>(l.size()) != lm.t) throw DimensionError("landmarks: ragged tuples");
    if (!seen.insert(l).second) throw DegenerateLandmarkError("landmarks: duplicate tuple");
  }
  const MomentTensor pri = prior_moment_tensor(prior, lm.t, cfg);
  const std::size_t cols = int_pow(a.num_topics(), lm.t);
  lm.a_tilde = Matrix(tuples.size(), cols);
  for (std::size_t i = 0; i < tuples.size(); ++i) {
    const auto row = kron_row(a, tuples[i]);
    double p = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      lm.a_tilde(i, c) = row[c];
      p += row[c] * pri[c];
    }
    if (!(p > 0.0)) throw DegenerateLandmarkError("landmarks: tuple has zero marginal probability");
    lm.marginals.push_back(p);
  }
  lm.landmarks = std::move(tuples);
  if (lm.size() >= cols) lm.a_tilde_pinv = pinv_left(lm.a_tilde);
  return lm;
}

LandmarkSet build_landmarks(const TopicWordMatrix& a, const PriorSpec& prior, int t, std::size_t m,
                            const OracleConfig& cfg, std::uint64_t seed) {
  if (t < 1) throw DimensionError("build_landmarks: t must be positive");
  const std::size_t V = a.vocab_size();
  const std::size_t total = int_pow(V, t);
  if (m == 0 || m > total) throw DimensionError("build_landmarks: m must lie in [1, V^t]");
  if (m < int_pow(a.num_topics(), t)) {
    throw RankError("build_landmarks: m = " + std::to_string(m) + " is below K^t", 0.0);
  }
  if (m == total) {
    std::vector<std::vector<std::uint32_t>> all;
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::vector<std::uint32_t> tup(static_cast<std::size_t>(t));
      std::size_t r = idx;
      for (int j = t - 1; j >= 0; --j) {
        tup[static_cast<std::size_t>(j)] = static_cast<std::uint32_t>(r % V);
        r /= V;
      }
      all.push_back(std::move(tup));
    }
    return make_landmark_set(a, prior, std::move(all), cfg);
  }
  constexpr int kAttempts = 10;
  const std::size_t max_draws = 10'000 * m;
  for (int attempt = 0;; ++attempt) {
    Rng rng(seed, static_cast<std::uint64_t>(attempt));
    std::set<std::vector<std::uint32_t>> seen;
    std::vector<std::vector<std::uint32_t>> tuples;
    for (std::size_t draws = 0; tuples.size() < m; ++draws) {
      if (draws >= max_draws) throw DegenerateLandmarkError("build_landmarks: too few distinct tuples");
      auto tup = draw_tuple(a, sample_w(prior, rng), t, rng);
      if (seen.insert(tup).second) tuples.push_back(std::move(tup));
    }
    try {
      return make_landmark_set(a, prior, std::move(tuples), cfg);
    } catch (const RankError&) {
      if (attempt + 1 >= kAttempts) throw;
    }
  }
}

std::vector<double> landmark_representation(const MlpModel& model, const LandmarkSet& lm,
                                            const Document& x, double clamp) {
  const std::size_t V = vocab_of(model, static_cast<std::size_t>(lm.t));
  std::vector<const Document*> xs(lm.size(), &x);
  std::vector<const std::vector<std::uint32_t>*> ps;
  for (const auto& l : lm.landmarks) ps.push_back(&l);
  const Eigen::MatrixXd f = model.forward(encode_pairs(xs, ps, V));
  std::vector<double> g(lm.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = g_transform(f(0, static_cast<Eigen::Index>(i)), clamp);
  return g;
}

std::vector<double> ideal_landmark_representation(const TopicWordMatrix& a, const PriorSpec& prior,
                                                  const LandmarkSet& lm, const Document& x,
                                                  const OracleConfig& cfg, std::uint64_t stream) {
  std::vector<double> g(lm.size());
  if (prior.is_pure()) {
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = ideal_contrastive_g(a, prior, x, lm.landmarks[i], cfg);
    return g;
  }
  const PosteriorTensor post = posterior_moment_tensor(a, prior, x, lm.t, cfg, stream);
  for (std::size_t i = 0; i < g.size(); ++i) {
    double num = 0.0;
    for (std::size_t c = 0; c < lm.a_tilde.cols(); ++c) num += lm.a_tilde(i, c) * post.tensor[c];
    g[i] = num / lm.marginals[i];
  }
  return g;
}

MomentTensor recover_from_landmarks(const LandmarkSet& lm, std::span<const double> g) {
  if (g.size() != lm.size()) throw DimensionError("recover_from_landmarks: g has wrong length");
  if (lm.a_tilde_pinv.empty()) throw RankError("recover_from_landmarks: fewer landmarks than K^t", 0.0);
  std::vector<double> dg(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) dg[i] = lm.marginals[i] * g[i];
  const auto v = lm.a_tilde_pinv * std::span<const double>(dg);
  const std::size_t K = static_cast<std::size_t>(
      std::llround(std::pow(static_cast<double>(lm.a_tilde.cols()), 1.0 / lm.t)));
  MomentTensor out = unvec(v, lm.t, K);
  return lm.t == 2 ? symmetrize(out) : out;
}

Matrix build_kernel_matrix(const TopicWordMatrix& a, const PriorSpec& prior,
                           std::span<const Document> docs, const OracleConfig& cfg) {
  Matrix g(docs.size(), docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    for (std::size_t j = 0; j < docs.size(); ++j) {
      g(i, j) = ideal_contrastive_g(a, prior, docs[i], docs[j].words, cfg, i);
    }
  }
  return g;
}

std::vector<double> kernel_regression(const Matrix& g, std::span<const double> targets, double ridge) {
  if (g.rows() != g.cols()) throw DimensionError("kernel_regression: G must be square");
  if (targets.size() != g.rows()) throw DimensionError("kernel_regression: targets length differs from G");
  if (ridge < 0.0) throw DimensionError("kernel_regression: ridge must be nonnegative");
  try {
    return ridge_solve(g, targets, ridge);
  } catch (const ConditioningError& e) {
    throw ConditioningError(std::string(e.what()) + "; use a positive ridge");
  }
}

std::string landmarks_csv(const LandmarkSet& lm) {
  std::ostringstream out;
  out << "landmark_id";
  for (int j = 1; j <= lm.t; ++j) out << ",word_" << j;
  out << ",marginal\n";
  for (std::size_t i = 0; i < lm.size(); ++i) {
    out << i;
    for (auto y : lm.landmarks[i]) out << ',' << y;
    out << ',' << format_double(lm.marginals[i]) << '\n';
  }
  return out.str();
}

std::string representation_csv(const std::vector<std::vector<double>>& reps) {
  std::ostringstream out;
  out << "doc_id";
  const std::size_t m = reps.empty() ? 0 : reps[0].size();
  for (std::size_t j = 1; j <= m; ++j) out << ",g_" << j;
  out << '\n';
  for (std::size_t i = 0; i < reps.size(); ++i) {
    if (reps[i].size() != m) throw DimensionError("representation_csv: ragged rows");
    out << i;
    for (double v : reps[i]) out << ',' << format_double(v);
    out << '\n';
  }
  return out.str();
}

}  // namespace topicssl
