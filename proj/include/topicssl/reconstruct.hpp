#pragma once

// Masked-word reconstruction: sample construction, cross-entropy loss and the
// training loop.

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "topicssl/generative.hpp"
#include "topicssl/mlp.hpp"
#include "topicssl/posterior_oracle.hpp"
#include "topicssl/training.hpp"

namespace topicssl {

// One document with its mask set removed, plus the target tuples drawn from
// the mask set. All targets share the same context x.
struct MaskedSample {
  Document x;
  std::vector<std::vector<std::uint32_t>> targets;
};

// Picks targets_per_doc * t distinct positions as the mask set (fewer targets
// when the document cannot spare that many words while keeping one), removes
// them from the document and groups them into tuples of length t in draw
// order. Throws DocumentTooShortError when length < t + 1.
MaskedSample make_masked_samples(const Document& doc, int t, std::size_t targets_per_doc, Rng& rng);

// Row index of a word tuple in the V^t output: (y1, y2) -> y1 * V + y2.
std::size_t tuple_index(std::span<const std::uint32_t> tuple, std::size_t V);

// Network input: counts divided by document length (all zero for an empty
// document). One column per document.
Eigen::MatrixXd encode_documents(std::span<const Document* const> docs, std::size_t V);
Eigen::VectorXd encode_document(const Document& doc);

MlpModel make_reconstruct_model(std::size_t V, const TrainConfig& cfg);

// Predicted distribution over V^t word tuples for each document (columns).
Eigen::MatrixXd predict(const MlpModel& model, std::span<const Document> docs);

struct LossAndGrad {
  double loss = 0.0;  // mean cross-entropy over (sample, target) pairs
  Eigen::VectorXd grad;
  std::size_t pairs = 0;
};

LossAndGrad loss_and_grad(const MlpModel& model, std::span<const MaskedSample> batch, int t);
// Loss only, evaluated in chunks.
double mean_loss(const MlpModel& model, std::span<const MaskedSample> samples, int t);

// Mean of -log f*(x)[y] over the (sample, target) pairs, with f* the
// Bayes-optimal predictor. On the same samples this is the floor that the
// trained loss approaches.
double oracle_cross_entropy(const TopicWordMatrix& a, const PriorSpec& prior,
                            std::span<const MaskedSample> samples, int t, const OracleConfig& cfg,
                            int threads = 1);

// Epoch-at-a-time trainer. Corpus block b (epochs b*resample_every ..) and the
// masks of epoch e are drawn from streams derived from cfg.seed, so a trainer
// rebuilt from a saved TrainState continues exactly where the original was.
class ReconstructTrainer {
 public:
  ReconstructTrainer(MlpModel& model, const TopicWordMatrix& a, const PriorSpec& prior,
                     const GenConfig& gen, const TrainConfig& cfg,
                     std::optional<TrainState> resume = std::nullopt);

  // Runs one epoch. Throws DivergenceError per finish_epoch.
  EpochRecord run_epoch();
  bool done() const { return state_.epochs_done >= cfg_.epochs; }

  // Snapshot including the optimiser moments.
  TrainState state() const;
  const std::vector<MaskedSample>& validation() const { return val_; }

 private:
  const std::vector<Document>& corpus_for_epoch(std::size_t epoch);

  MlpModel& model_;
  const TopicWordMatrix& a_;
  const PriorSpec& prior_;
  GenConfig gen_;
  TrainConfig cfg_;
  TrainState state_;
  AmsGrad opt_;
  std::vector<MaskedSample> val_;
  std::vector<Document> corpus_;
  std::optional<std::size_t> corpus_block_;
};

// Runs ReconstructTrainer to cfg.epochs; `on_epoch` (optional) sees every
// finished epoch, e.g. to write checkpoints. Returns the loss history.
std::vector<EpochRecord> train(MlpModel& model, const TopicWordMatrix& a, const PriorSpec& prior,
                               const GenConfig& gen, const TrainConfig& cfg,
                               const std::function<void(const ReconstructTrainer&)>& on_epoch = {});

}  // namespace topicssl
