#pragma once

#include <vector>

#include "corrpost/tensornet/tensor.hpp"

namespace corrpost::nn {

struct SgdConfig {
  double lr = 0.01;
  double momentum = 0.0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Applies one update to every trainable parameter. Moment buffers are keyed
/// by position, so the same parameter list must be passed on every step.
/// A non-finite gradient raises DivergenceError before anything is modified.
template <typename T>
class Sgd {
 public:
  explicit Sgd(SgdConfig cfg) : cfg_(cfg) {}
  void step(const std::vector<Parameter<T>*>& params);

 private:
  SgdConfig cfg_;
  std::vector<std::vector<T>> velocity_;
};

template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}
  void step(const std::vector<Parameter<T>*>& params);
  long steps() const { return t_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace corrpost::nn
