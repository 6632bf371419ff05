#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "corrpost/tensornet/tensor.hpp"

namespace corrpost::nn {

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T swish(T x) {
  return x * sigmoid(x);
}

template <typename T>
T swish_derivative(T x) {
  const T s = sigmoid(x);
  return s + x * s * (T(1) - s);
}

inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

/// A differentiable stage. forward() in kTrain mode caches whatever
/// backward() needs; backward() takes dLoss/dOutput, accumulates parameter
/// gradients and returns dLoss/dInput.
template <typename T>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T>& grad_out) = 0;
  /// Appends owned parameters and buffers in a fixed order.
  virtual void collect(std::vector<Parameter<T>*>& out) { (void)out; }
};

/// 3x3 (zero padding 1) or 1x1 (no padding) convolution without bias;
/// stride 1 or 2, output side = input side / stride.
template <typename T>
class Conv2d final : public Layer<T> {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride, std::string name);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(std::vector<Parameter<T>*>& out) override { out.push_back(&weight_); }

  Parameter<T>& weight() { return weight_; }
  std::size_t stride() const { return stride_; }

 private:
  std::size_t in_, out_, kernel_, stride_, pad_;
  Parameter<T> weight_;
  Tensor<T> input_;
  bool cached_ = false;
};

/// Per-channel batch normalization over (N, H, W) with affine gain/shift and
/// running statistics (momentum 0.9, eps 1e-5).
template <typename T>
class BatchNorm2d final : public Layer<T> {
 public:
  BatchNorm2d(std::size_t channels, std::string name);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(std::vector<Parameter<T>*>& out) override;

  Parameter<T>& gain() { return gain_; }
  Parameter<T>& shift() { return shift_; }
  Parameter<T>& running_mean() { return running_mean_; }
  Parameter<T>& running_var() { return running_var_; }

 private:
  std::size_t channels_;
  Parameter<T> gain_, shift_, running_mean_, running_var_;
  Tensor<T> normalized_;
  std::vector<T> inv_std_;
  bool cached_ = false;
};

template <typename T>
class Swish final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  Tensor<T> input_;
  bool cached_ = false;
};

/// conv3x3(stride) - BN - Swish - conv3x3 - BN, plus an identity skip (or a
/// 1x1 conv + BN projection when the shape changes), then Swish on the sum.
template <typename T>
class ResidualBlock final : public Layer<T> {
 public:
  ResidualBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride, const std::string& name);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(std::vector<Parameter<T>*>& out) override;

  bool has_projection() const { return proj_conv_ != nullptr; }
  Conv2d<T>& conv1() { return conv1_; }
  Conv2d<T>& conv2() { return conv2_; }
  BatchNorm2d<T>& bn1() { return bn1_; }
  BatchNorm2d<T>& bn2() { return bn2_; }

 private:
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn1_;
  Swish<T> act1_;
  Conv2d<T> conv2_;
  BatchNorm2d<T> bn2_;
  std::unique_ptr<Conv2d<T>> proj_conv_;
  std::unique_ptr<BatchNorm2d<T>> proj_bn_;
  Swish<T> act_out_;
};

/// [N,C,H,W] -> [N,C] spatial mean.
template <typename T>
class GlobalAvgPool final : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;

 private:
  std::vector<std::size_t> input_shape_;
  bool cached_ = false;
};

/// One output neuron with logistic activation: [N,C] -> [N] probabilities.
template <typename T>
class DenseSigmoid final : public Layer<T> {
 public:
  DenseSigmoid(std::size_t in_features, std::string name);

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override;
  Tensor<T> backward(const Tensor<T>& grad_out) override;
  void collect(std::vector<Parameter<T>*>& out) override;

  Parameter<T>& weight() { return weight_; }
  Parameter<T>& bias() { return bias_; }

 private:
  std::size_t in_;
  Parameter<T> weight_, bias_;
  Tensor<T> input_, output_;
  bool cached_ = false;
};

inline constexpr double kProbabilityClamp = 1e-7;

/// Mean binary cross-entropy on predictions clamped to [1e-7, 1 - 1e-7].
template <typename T>
T bce(const Tensor<T>& pred, const Tensor<T>& labels);

/// dBCE/dpred; zero where the prediction was clamped.
template <typename T>
Tensor<T> bce_gradient(const Tensor<T>& pred, const Tensor<T>& labels);

/// l2 * sum of squares over decayed parameters.
template <typename T>
T l2_penalty(const std::vector<Parameter<T>*>& params, T l2);

/// Adds 2 * l2 * w to the gradient of every decayed parameter.
template <typename T>
void add_l2_gradient(const std::vector<Parameter<T>*>& params, T l2);

/// bce(pred, labels) + l2_penalty(params, l2).
template <typename T>
T bce_loss(const Tensor<T>& pred, const Tensor<T>& labels, const std::vector<Parameter<T>*>& params, T l2);

}  // namespace corrpost::nn
