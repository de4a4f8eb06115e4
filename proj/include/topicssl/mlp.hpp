#pragma once

// Residual fully-connected network over bag-of-words inputs.
//
//   h_0     = act(W_in x + b_in)
//   h_{i+1} = h_i + act(W_i h_i + b_i)        i = 0 .. num_blocks-1
//   logits  = W_out h_L + b_out
//
// followed by a softmax (reconstruction) or a scalar sigmoid (contrastive).
// Batches are column-major: one sample per column.
//
// All parameters live in one flat vector, in this order, each matrix stored
// column-major:
//   W_in (width x input_dim), b_in (width),
//   for each block: W_i (width x width), b_i (width),
//   W_out (output_dim x width), b_out (output_dim).
// The optimiser and the checkpoint format both use this order.

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace topicssl {

enum class Activation { kRelu, kTanh };
enum class OutputHead { kSoftmax, kSigmoid };

struct MlpShape {
  std::size_t input_dim = 0;
  std::size_t width = 0;
  std::size_t num_blocks = 0;
  std::size_t output_dim = 0;
  Activation activation = Activation::kRelu;
  OutputHead head = OutputHead::kSoftmax;

  friend bool operator==(const MlpShape&, const MlpShape&) = default;
};

class MlpModel {
 public:
  MlpModel() = default;
  // Affine weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero, and the
  // output layer all zero so the initial prediction is uniform (softmax) or
  // 0.5 (sigmoid).
  MlpModel(const MlpShape& shape, std::uint64_t seed);
  MlpModel(const MlpShape& shape, Eigen::VectorXd params);

  const MlpShape& shape() const { return shape_; }
  std::size_t num_parameters() const { return static_cast<std::size_t>(params_.size()); }
  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& parameters() { return params_; }
  bool parameters_finite() const { return params_.allFinite(); }

  // Cached activations of one forward pass, consumed by backward().
  struct Tape {
    Eigen::MatrixXd input;
    std::vector<Eigen::MatrixXd> pre;   // pre-activations: input layer, then each block
    std::vector<Eigen::MatrixXd> post;  // h_0 .. h_L
    Eigen::MatrixXd logits;
  };

  // Logits for a batch. Throws ModelCorruptError on non-finite parameters.
  Eigen::MatrixXd logits(const Eigen::MatrixXd& x, Tape* tape = nullptr) const;
  // Output probabilities: column-wise softmax, or sigmoid of the single logit.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const;

  // Gradient of the loss with respect to every parameter, given the tape of
  // the forward pass and dLoss/dlogits. Returned in the flat layout.
  Eigen::VectorXd backward(const Tape& tape, const Eigen::MatrixXd& dlogits) const;

 private:
  struct Offsets {
    std::size_t w_in, b_in;
    std::vector<std::size_t> w_block, b_block;
    std::size_t w_out, b_out, total;
  };
  static Offsets layout(const MlpShape& s);

  MlpShape shape_;
  Offsets off_{};
  Eigen::VectorXd params_;
};

// Column-wise log-softmax, stabilised by the column max.
Eigen::MatrixXd log_softmax_columns(const Eigen::MatrixXd& logits);

// AMSGrad with bias correction and an optional L2 weight decay folded into
// the gradient.
struct AmsGradConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  friend bool operator==(const AmsGradConfig&, const AmsGradConfig&) = default;
};

class AmsGrad {
 public:
  AmsGrad() = default;
  AmsGrad(std::size_t n, AmsGradConfig cfg);

  void step(Eigen::VectorXd& params, Eigen::VectorXd grad, double lr);

  std::uint64_t steps() const { return t_; }
  const AmsGradConfig& config() const { return cfg_; }

  // Raw state, exposed for checkpointing.
  Eigen::VectorXd m, v, v_max;
  void set_steps(std::uint64_t t) { t_ = t; }

 private:
  AmsGradConfig cfg_;
  std::uint64_t t_ = 0;
};

}  // namespace topicssl
