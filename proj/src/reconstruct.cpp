#include "topicssl/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "topicssl/error.hpp"
#include "topicssl/parallel.hpp"

namespace topicssl {

MaskedSample make_masked_samples(const Document& doc, int t, std::size_t targets_per_doc, Rng& rng) {
  if (t < 1) throw DimensionError("make_masked_samples: t must be positive");
  const std::size_t L = doc.length();
  const auto tt = static_cast<std::size_t>(t);
  if (L < tt + 1) {
    throw DocumentTooShortError("document of length " + std::to_string(L) +
                                " cannot spare " + std::to_string(t) + " masked words");
  }
  const std::size_t n_targets = std::min(std::max<std::size_t>(targets_per_doc, 1), (L - 1) / tt);
  const std::size_t n_mask = n_targets * tt;

  // Partial Fisher-Yates: the first n_mask entries are the mask set in draw order.
  std::vector<std::size_t> pos(L);
  std::iota(pos.begin(), pos.end(), 0);
  for (std::size_t i = 0; i < n_mask; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(L - i));
    std::swap(pos[i], pos[j]);
  }
  std::vector<char> masked(L, 0);
  MaskedSample s;
  s.targets.resize(n_targets);
  for (std::size_t i = 0; i < n_mask; ++i) {
    masked[pos[i]] = 1;
    s.targets[i / tt].push_back(doc.words[pos[i]]);
  }
  std::vector<std::uint32_t> kept;
  kept.reserve(L - n_mask);
  for (std::size_t i = 0; i < L; ++i) {
    if (!masked[i]) kept.push_back(doc.words[i]);
  }
  s.x = Document::from_words(std::move(kept), doc.counts.size(), doc.w);
  return s;
}

std::size_t tuple_index(std::span<const std::uint32_t> tuple, std::size_t V) {
  std::size_t idx = 0;
  for (auto y : tuple) {
    if (y >= V) throw DimensionError("tuple_index: word id out of range");
    idx = idx * V + y;
  }
  return idx;
}

Eigen::VectorXd encode_document(const Document& doc) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(doc.counts.size()));
  const double len = static_cast<double>(doc.length());
  for (std::size_t v = 0; v < doc.counts.size(); ++v) {
    x[static_cast<Eigen::Index>(v)] = len > 0 ? doc.counts[v] / len : 0.0;
  }
  return x;
}

Eigen::MatrixXd encode_documents(std::span<const Document* const> docs, std::size_t V) {
  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(V),
                                            static_cast<Eigen::Index>(docs.size()));
  for (std::size_t c = 0; c < docs.size(); ++c) {
    const Document& d = *docs[c];
    if (d.counts.size() != V) throw DimensionError("encode_documents: vocabulary size mismatch");
    const double len = static_cast<double>(d.length());
    if (len == 0) continue;
    for (auto w : d.words) x(w, static_cast<Eigen::Index>(c)) += 1.0 / len;
  }
  return x;
}

MlpModel make_reconstruct_model(std::size_t V, const TrainConfig& cfg) {
  MlpShape s;
  s.input_dim = V;
  s.width = cfg.width;
  s.num_blocks = cfg.num_blocks;
  s.output_dim = int_pow(V, cfg.t);
  s.activation = cfg.activation;
  s.head = OutputHead::kSoftmax;
  return MlpModel(s, derive_seed(cfg.seed, "init"));
}

Eigen::MatrixXd predict(const MlpModel& model, std::span<const Document> docs) {
  std::vector<const Document*> ptrs;
  for (const auto& d : docs) ptrs.push_back(&d);
  return model.forward(encode_documents(ptrs, model.shape().input_dim));
}

namespace {

Eigen::MatrixXd encode_samples(std::span<const MaskedSample> batch, std::size_t V) {
  std::vector<const Document*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s.x);
  return encode_documents(ptrs, V);
}

std::size_t count_pairs(std::span<const MaskedSample> batch) {
  std::size_t n = 0;
  for (const auto& s : batch) n += s.targets.size();
  return n;
}

void check_targets(const MaskedSample& s, int t) {
  for (const auto& y : s.targets) {
    if (y.size() != static_cast<std::size_t>(t)) throw DimensionError("target tuple length differs from t");
  }
}

constexpr std::size_t kEvalChunk = 512;

}  // namespace

LossAndGrad loss_and_grad(const MlpModel& model, std::span<const MaskedSample> batch, int t) {
  if (batch.empty()) throw DimensionError("loss_and_grad: empty batch");
  const std::size_t V = model.shape().input_dim;
  const std::size_t pairs = count_pairs(batch);
  if (pairs == 0) throw DimensionError("loss_and_grad: batch has no targets");

  MlpModel::Tape tape;
  const Eigen::MatrixXd logits = model.logits(encode_samples(batch, V), &tape);
  const Eigen::MatrixXd logp = log_softmax_columns(logits);
  Eigen::MatrixXd dlogits(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(pairs);
  double loss = 0.0;
  for (std::size_t c = 0; c < batch.size(); ++c) {
    const auto& s = batch[c];
    check_targets(s, t);
    const auto col = static_cast<Eigen::Index>(c);
    dlogits.col(col) = logp.col(col).array().exp() * (static_cast<double>(s.targets.size()) * inv);
    for (const auto& y : s.targets) {
      const auto r = static_cast<Eigen::Index>(tuple_index(y, V));
      loss -= logp(r, col);
      dlogits(r, col) -= inv;
    }
  }
  return {loss * inv, model.backward(tape, dlogits), pairs};
}

double mean_loss(const MlpModel& model, std::span<const MaskedSample> samples, int t) {
  const std::size_t V = model.shape().input_dim;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    const auto chunk = samples.subspan(start, std::min(kEvalChunk, samples.size() - start));
    const Eigen::MatrixXd logp = log_softmax_columns(model.logits(encode_samples(chunk, V)));
    for (std::size_t c = 0; c < chunk.size(); ++c) {
      check_targets(chunk[c], t);
      for (const auto& y : chunk[c].targets) {
        total -= logp(static_cast<Eigen::Index>(tuple_index(y, V)), static_cast<Eigen::Index>(c));
        ++pairs;
      }
    }
  }
  if (pairs == 0) throw DimensionError("mean_loss: no targets");
  return total / static_cast<double>(pairs);
}

double oracle_cross_entropy(const TopicWordMatrix& a, const PriorSpec& prior,
                            std::span<const MaskedSample> samples, int t, const OracleConfig& cfg,
                            int threads) {
  const std::size_t V = a.vocab_size();
  std::vector<double> per(samples.size(), 0.0);
  std::vector<std::size_t> n(samples.size(), 0);
  parallel_for(samples.size(), threads, [&](std::size_t i) {
    const auto f = ideal_reconstruct_predictor(a, prior, samples[i].x, t, cfg, i);
    for (const auto& y : samples[i].targets) {
      per[i] -= std::log(f[tuple_index(y, V)]);
      ++n[i];
    }
  });
  const double total = std::accumulate(per.begin(), per.end(), 0.0);
  const auto pairs = std::accumulate(n.begin(), n.end(), std::size_t{0});
  if (pairs == 0) throw DimensionError("oracle_cross_entropy: no targets");
  return total / static_cast<double>(pairs);
}

ReconstructTrainer::ReconstructTrainer(MlpModel& model, const TopicWordMatrix& a,
                                       const PriorSpec& prior, const GenConfig& gen,
                                       const TrainConfig& cfg, std::optional<TrainState> resume)
    : model_(model), a_(a), prior_(prior), gen_(gen), cfg_(cfg) {
  cfg_.validate();
  const std::size_t V = a.vocab_size();
  if (model.shape().input_dim != V || model.shape().output_dim != int_pow(V, cfg.t) ||
      model.shape().head != OutputHead::kSoftmax) {
    throw DimensionError("reconstruct trainer: model shape does not match V and t");
  }
  gen_.min_length = std::max<std::size_t>(gen_.min_length, static_cast<std::size_t>(cfg.t) + 1);

  GenConfig vg = gen_;
  vg.corpus_size = cfg.val_size;
  vg.seed = derive_seed(cfg.seed, "validation");
  const auto val_docs = make_corpus(a, prior, vg, cfg.threads);
  const Rng mask_base(derive_seed(cfg.seed, "validation_masks"));
  val_.reserve(val_docs.size());
  for (std::size_t i = 0; i < val_docs.size(); ++i) {
    Rng r = mask_base.split(i);
    val_.push_back(make_masked_samples(val_docs[i], cfg.t, cfg.targets_per_doc, r));
  }

  const std::size_t n = model.num_parameters();
  opt_ = AmsGrad(n, cfg.optimizer);
  if (resume) {
    state_ = std::move(*resume);
    if (static_cast<std::size_t>(state_.adam_m.size()) != n) {
      throw DimensionError("reconstruct trainer: resume state does not match the model");
    }
    opt_.m = state_.adam_m;
    opt_.v = state_.adam_v;
    opt_.v_max = state_.adam_v_max;
    opt_.set_steps(state_.adam_steps);
  } else {
    state_.lr = cfg.learning_rate;
    state_.initial_loss = mean_loss(model, val_, cfg.t);
    state_.best_val = state_.initial_loss;
  }
}

const std::vector<Document>& ReconstructTrainer::corpus_for_epoch(std::size_t epoch) {
  const std::size_t block = epoch / cfg_.resample_every;
  if (corpus_block_ != block) {
    GenConfig g = gen_;
    g.corpus_size = cfg_.corpus_size;
    g.seed = derive_seed(cfg_.seed, "train_corpus/" + std::to_string(block));
    corpus_ = make_corpus(a_, prior_, g, cfg_.threads);
    corpus_block_ = block;
  }
  return corpus_;
}

EpochRecord ReconstructTrainer::run_epoch() {
  const std::size_t epoch = state_.epochs_done;  // zero-based index of this epoch
  const auto& docs = corpus_for_epoch(epoch);

  const Rng mask_base(derive_seed(cfg_.seed, "masks"), epoch);
  std::vector<MaskedSample> samples;
  samples.reserve(docs.size());
  for (std::size_t i = 0; i < docs.size(); ++i) {
    Rng r = mask_base.split(i);
    samples.push_back(make_masked_samples(docs[i], cfg_.t, cfg_.targets_per_doc, r));
  }
  Rng shuffle_rng(derive_seed(cfg_.seed, "shuffle"), epoch);
  shuffle_rng.shuffle(samples);

  double loss_sum = 0.0;
  std::size_t pairs = 0;
  const std::span<const MaskedSample> all(samples);
  for (std::size_t start = 0; start < samples.size(); start += cfg_.batch_size) {
    const auto batch = all.subspan(start, std::min(cfg_.batch_size, samples.size() - start));
    auto lg = loss_and_grad(model_, batch, cfg_.t);
    loss_sum += lg.loss * static_cast<double>(lg.pairs);
    pairs += lg.pairs;
    opt_.step(model_.parameters(), std::move(lg.grad), state_.lr);
  }
  if (!model_.parameters_finite()) throw ModelCorruptError("training produced non-finite parameters");

  EpochRecord rec;
  rec.epoch = epoch + 1;
  rec.train_loss = loss_sum / static_cast<double>(pairs);
  rec.val_loss = mean_loss(model_, val_, cfg_.t);
  rec.lr = state_.lr;
  finish_epoch(state_, rec, cfg_.lr_halve_patience);
  return rec;
}

TrainState ReconstructTrainer::state() const {
  TrainState s = state_;
  s.adam_m = opt_.m;
  s.adam_v = opt_.v;
  s.adam_v_max = opt_.v_max;
  s.adam_steps = opt_.steps();
  return s;
}

std::vector<EpochRecord> train(MlpModel& model, const TopicWordMatrix& a, const PriorSpec& prior,
                               const GenConfig& gen, const TrainConfig& cfg,
                               const std::function<void(const ReconstructTrainer&)>& on_epoch) {
  if (cfg.epochs == 0) return {};
  ReconstructTrainer trainer(model, a, prior, gen, cfg);
  while (!trainer.done()) {
    trainer.run_epoch();
    if (on_epoch) on_epoch(trainer);
  }
  return trainer.state().history;
}

}  // namespace topicssl
