#include "topicssl/mlp.hpp"

#include <cmath>

#include "topicssl/error.hpp"
#include "topicssl/rng.hpp"

namespace topicssl {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using MatMap = Eigen::Map<MatrixXd>;
using CMatMap = Eigen::Map<const MatrixXd>;
using CVecMap = Eigen::Map<const VectorXd>;
using VecMap = Eigen::Map<VectorXd>;

MatrixXd activate(const MatrixXd& z, Activation a) {
  if (a == Activation::kRelu) return z.cwiseMax(0.0);
  return z.array().tanh().matrix();
}

// Derivative of the activation, evaluated at the pre-activation z.
MatrixXd activate_grad(const MatrixXd& z, Activation a) {
  if (a == Activation::kRelu) return (z.array() > 0.0).cast<double>().matrix();
  return (1.0 - z.array().tanh().square()).matrix();
}

}  // namespace

MlpModel::Offsets MlpModel::layout(const MlpShape& s) {
  if (s.input_dim == 0 || s.width == 0 || s.output_dim == 0) {
    throw DimensionError("mlp: input, width and output dimensions must be positive");
  }
  if (s.head == OutputHead::kSigmoid && s.output_dim != 1) {
    throw DimensionError("mlp: sigmoid head needs output_dim == 1");
  }
  Offsets o;
  std::size_t at = 0;
  o.w_in = at;
  at += s.width * s.input_dim;
  o.b_in = at;
  at += s.width;
  for (std::size_t i = 0; i < s.num_blocks; ++i) {
    o.w_block.push_back(at);
    at += s.width * s.width;
    o.b_block.push_back(at);
    at += s.width;
  }
  o.w_out = at;
  at += s.output_dim * s.width;
  o.b_out = at;
  at += s.output_dim;
  o.total = at;
  return o;
}

MlpModel::MlpModel(const MlpShape& shape, std::uint64_t seed)
    : shape_(shape), off_(layout(shape)), params_(VectorXd::Zero(off_.total)) {
  Rng rng(seed, 0);
  auto fill = [&](std::size_t start, std::size_t count, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i) params_[start + i] = bound * (2.0 * rng.uniform() - 1.0);
  };
  fill(off_.w_in, shape.width * shape.input_dim, shape.input_dim);
  for (std::size_t i = 0; i < shape.num_blocks; ++i) fill(off_.w_block[i], shape.width * shape.width, shape.width);
}

MlpModel::MlpModel(const MlpShape& shape, VectorXd params)
    : shape_(shape), off_(layout(shape)), params_(std::move(params)) {
  if (static_cast<std::size_t>(params_.size()) != off_.total) {
    throw DimensionError("mlp: parameter vector has " + std::to_string(params_.size()) +
                         " entries, shape needs " + std::to_string(off_.total));
  }
}

MatrixXd MlpModel::logits(const MatrixXd& x, Tape* tape) const {
  if (static_cast<std::size_t>(x.rows()) != shape_.input_dim) {
    throw DimensionError("mlp: input has " + std::to_string(x.rows()) + " rows, expected " +
                         std::to_string(shape_.input_dim));
  }
  if (!parameters_finite()) throw ModelCorruptError("mlp: non-finite parameter");
  const auto W = static_cast<Eigen::Index>(shape_.width);
  const double* p = params_.data();

  MatrixXd z = CMatMap(p + off_.w_in, W, x.rows()) * x;
  z.colwise() += CVecMap(p + off_.b_in, W);
  MatrixXd h = activate(z, shape_.activation);
  if (tape) {
    tape->input = x;
    tape->pre.assign(1, z);
    tape->post.assign(1, h);
  }
  for (std::size_t i = 0; i < shape_.num_blocks; ++i) {
    z.noalias() = CMatMap(p + off_.w_block[i], W, W) * h;
    z.colwise() += CVecMap(p + off_.b_block[i], W);
    h += activate(z, shape_.activation);
    if (tape) {
      tape->pre.push_back(z);
      tape->post.push_back(h);
    }
  }
  const auto O = static_cast<Eigen::Index>(shape_.output_dim);
  MatrixXd out = CMatMap(p + off_.w_out, O, W) * h;
  out.colwise() += CVecMap(p + off_.b_out, O);
  if (tape) tape->logits = out;
  return out;
}

MatrixXd MlpModel::forward(const MatrixXd& x) const {
  MatrixXd z = logits(x);
  if (shape_.head == OutputHead::kSigmoid) {
    return (1.0 / (1.0 + (-z.array()).exp())).matrix();
  }
  return log_softmax_columns(z).array().exp().matrix();
}

VectorXd MlpModel::backward(const Tape& tape, const MatrixXd& dlogits) const {
  const auto W = static_cast<Eigen::Index>(shape_.width);
  const auto O = static_cast<Eigen::Index>(shape_.output_dim);
  const auto I = static_cast<Eigen::Index>(shape_.input_dim);
  if (dlogits.rows() != O || dlogits.cols() != tape.logits.cols()) {
    throw DimensionError("mlp: dlogits shape does not match the forward pass");
  }
  VectorXd grad = VectorXd::Zero(params_.size());
  const double* p = params_.data();
  double* g = grad.data();

  MatMap(g + off_.w_out, O, W).noalias() = dlogits * tape.post.back().transpose();
  VecMap(g + off_.b_out, O) = dlogits.rowwise().sum();
  MatrixXd dh = CMatMap(p + off_.w_out, O, W).transpose() * dlogits;

  for (std::size_t i = shape_.num_blocks; i-- > 0;) {
    const MatrixXd dz = dh.cwiseProduct(activate_grad(tape.pre[i + 1], shape_.activation));
    MatMap(g + off_.w_block[i], W, W).noalias() = dz * tape.post[i].transpose();
    VecMap(g + off_.b_block[i], W) = dz.rowwise().sum();
    dh.noalias() += CMatMap(p + off_.w_block[i], W, W).transpose() * dz;
  }
  const MatrixXd dz = dh.cwiseProduct(activate_grad(tape.pre[0], shape_.activation));
  MatMap(g + off_.w_in, W, I).noalias() = dz * tape.input.transpose();
  VecMap(g + off_.b_in, W) = dz.rowwise().sum();
  return grad;
}

MatrixXd log_softmax_columns(const MatrixXd& logits) {
  MatrixXd out = logits;
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    auto col = out.col(c);
    const double m = col.maxCoeff();
    const double lse = m + std::log((col.array() - m).exp().sum());
    col.array() -= lse;
  }
  return out;
}

AmsGrad::AmsGrad(std::size_t n, AmsGradConfig cfg)
    : m(VectorXd::Zero(n)), v(VectorXd::Zero(n)), v_max(VectorXd::Zero(n)), cfg_(cfg) {}

void AmsGrad::step(VectorXd& params, VectorXd grad, double lr) {
  if (grad.size() != params.size() || m.size() != params.size()) {
    throw DimensionError("amsgrad: gradient and state sizes disagree with parameters");
  }
  if (cfg_.weight_decay != 0.0) grad += cfg_.weight_decay * params;
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * grad;
  v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * grad.cwiseProduct(grad);
  v_max = v_max.cwiseMax(v);
  const double step = lr / bc1;
  params.array() -= step * m.array() / ((v_max.array() / bc2).sqrt() + cfg_.eps);
}

}  // namespace topicssl
