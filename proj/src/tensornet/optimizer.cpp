#include "corrpost/tensornet/optimizer.hpp"

#include <cmath>

namespace corrpost::nn {
namespace {

template <typename T>
void check_finite(const std::vector<Parameter<T>*>& params) {
  for (const auto* p : params) {
    if (!p->trainable) continue;
    if (p->grad.size() != p->value.size()) throw ShapeError(p->name + ": gradient shape does not match parameter");
    for (T g : p->grad.data()) {
      if (!std::isfinite(g)) throw DivergenceError(p->name + ": non-finite gradient");
    }
  }
}

template <typename T>
void init_state(std::vector<std::vector<T>>& state, const std::vector<Parameter<T>*>& params) {
  if (!state.empty()) {
    if (state.size() != params.size()) throw StateError("optimizer: parameter list changed between steps");
    return;
  }
  for (const auto* p : params) state.emplace_back(p->trainable ? p->value.size() : 0, T(0));
}

}  // namespace

template <typename T>
void Sgd<T>::step(const std::vector<Parameter<T>*>& params) {
  check_finite(params);
  init_state(velocity_, params);
  const T lr = static_cast<T>(cfg_.lr);
  const T mu = static_cast<T>(cfg_.momentum);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    if (!p->trainable) continue;
    auto& vel = velocity_[k];
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      vel[i] = mu * vel[i] + p->grad[i];
      p->value[i] -= lr * vel[i];
    }
  }
}

template <typename T>
void Adam<T>::step(const std::vector<Parameter<T>*>& params) {
  check_finite(params);
  init_state(m_, params);
  init_state(v_, params);
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const T step_size = static_cast<T>(cfg_.lr / c1);
  const T inv_c2 = static_cast<T>(1.0 / c2);
  const T b1 = static_cast<T>(cfg_.beta1);
  const T b2 = static_cast<T>(cfg_.beta2);
  const T eps = static_cast<T>(cfg_.eps);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto* p = params[k];
    if (!p->trainable) continue;
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const T g = p->grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      p->value[i] -= step_size * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

template class Sgd<float>;
template class Sgd<double>;
template class Adam<float>;
template class Adam<double>;

}  // namespace corrpost::nn
