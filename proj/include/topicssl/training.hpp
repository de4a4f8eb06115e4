#pragma once

// Pieces shared by the reconstruction and contrastive trainers: the training
// configuration, per-epoch history, learning-rate plateau schedule and the
// binary checkpoint format.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "topicssl/error.hpp"
#include "topicssl/mlp.hpp"

namespace topicssl {

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 64;
  double learning_rate = 2e-4;
  std::size_t lr_halve_patience = 10;
  AmsGradConfig optimizer;
  std::size_t resample_every = 2;
  std::size_t targets_per_doc = 6;  // 6 for t = 1, 1 for t = 2
  std::size_t corpus_size = 10'000;
  std::size_t val_size = 2'000;
  int t = 1;
  // Network shape (input and output sizes follow from V and t).
  std::size_t width = 256;
  std::size_t num_blocks = 3;
  Activation activation = Activation::kRelu;
  std::uint64_t seed = 0;
  int threads = 1;

  // Throws ConfigError on non-positive rates or counts.
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

// Raised when the training loss stays above 10x the initial loss for 5
// consecutive epochs.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::vector<EpochRecord> history)
      : Error(what), history_(std::move(history)) {}
  const std::vector<EpochRecord>& history() const { return history_; }

 private:
  std::vector<EpochRecord> history_;
};

inline constexpr double kDivergenceFactor = 10.0;
inline constexpr std::size_t kDivergenceEpochs = 5;

// Everything needed to continue a run bit-for-bit.
struct TrainState {
  std::size_t epochs_done = 0;
  double lr = 0.0;
  double best_val = 0.0;
  std::size_t bad_epochs = 0;
  double initial_loss = 0.0;
  std::size_t diverge_streak = 0;
  std::uint64_t adam_steps = 0;
  Eigen::VectorXd adam_m, adam_v, adam_v_max;
  std::vector<EpochRecord> history;
};

// Applies the end-of-epoch bookkeeping shared by both objectives: plateau
// halving of the learning rate and the divergence check. Appends `rec` to the
// history.
void finish_epoch(TrainState& state, EpochRecord rec, std::size_t patience);

enum class Objective { kReconstruct, kContrastive };

// Checkpoint layout (all integers u64 and floats f64, little-endian, except
// where noted):
//   "TSSLCKPT" magic (8 bytes), u32 version (=1), u32 objective,
//   V, K, t,
//   u32 activation, u32 head,
//   input_dim, width, num_blocks, output_dim,
//   n_params, params[n_params] in the MlpModel flat order,
//   u8 has_state, then if set:
//     epochs_done, lr, best_val, bad_epochs, initial_loss, diverge_streak,
//     adam_steps, m[n_params], v[n_params], v_max[n_params],
//     n_history, then per record: epoch, train_loss, val_loss, lr.
struct Checkpoint {
  Objective objective = Objective::kReconstruct;
  std::size_t V = 0;
  std::size_t K = 0;
  int t = 1;
  MlpModel model;
  std::optional<TrainState> state;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::string_view bytes);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Loss history as CSV with header `epoch,train_loss,val_loss,lr`.
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace topicssl
