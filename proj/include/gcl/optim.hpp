#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "gcl/params.hpp"
#include "gcl/tensor.hpp"

namespace gcl {

struct AdamHyper {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First/second moment buffers and step count for one parameter.
template <class T>
struct AdamState {
  std::vector<T> m;
  std::vector<T> v;
  std::uint64_t t = 0;
};

/// One bias-corrected Adam update applied in place.
template <class T>
void adam_step(std::span<T> param, std::span<const T> grad, AdamState<T>& state, const AdamHyper& hp) {
  if (grad.size() != param.size()) {
    throw std::invalid_argument("adam_step: gradient has " + std::to_string(grad.size()) + " values for a parameter of " +
                                std::to_string(param.size()));
  }
  if (state.m.empty() && state.v.empty()) {
    state.m.assign(param.size(), T(0));
    state.v.assign(param.size(), T(0));
  }
  if (state.m.size() != param.size() || state.v.size() != param.size()) {
    throw std::invalid_argument("adam_step: moment buffers do not match the parameter shape");
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(hp.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(hp.beta2, static_cast<double>(state.t));
  const T b1 = T(hp.beta1), b2 = T(hp.beta2);
  const T lr = T(hp.learning_rate), eps = T(hp.epsilon);
  const T inv_c1 = T(1.0 / c1), inv_c2 = T(1.0 / c2);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const T g = grad[i];
    state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
    state.v[i] = b2 * state.v[i] + (T(1) - b2) * g * g;
    const T m_hat = state.m[i] * inv_c1;
    const T v_hat = state.v[i] * inv_c2;
    param[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
  }
}

/// Adam over a parameter store. Parameters without a gradient this step are
/// left untouched, including their step counter.
template <class T>
class Adam {
public:
  explicit Adam(AdamHyper hp = {}) : hp_(hp) {}

  void step(ParamStore<T>& store) {
    for (auto& [name, p] : store.entries()) {
      if (!p.has_grad()) continue;
      Tensor<T> param = p;
      adam_step<T>(param.data(), param.grad(), states_[name], hp_);
    }
  }

  const AdamHyper& hyper() const { return hp_; }
  AdamHyper& hyper() { return hp_; }
  std::map<std::string, AdamState<T>>& states() { return states_; }
  const std::map<std::string, AdamState<T>>& states() const { return states_; }

private:
  AdamHyper hp_;
  std::map<std::string, AdamState<T>> states_;
};

template <class T>
double global_grad_norm(const ParamStore<T>& store) {
  double sq = 0.0;
  for (const auto& [name, p] : store.entries())
    for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(sq);
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
template <class T>
double clip_grad_norm(ParamStore<T>& store, double max_norm) {
  if (!(max_norm > 0.0)) throw std::invalid_argument("clip_grad_norm: max norm must be positive");
  const double norm = global_grad_norm(store);
  if (norm > max_norm) {
    const T factor = T(max_norm / (norm + 1e-12));
    for (auto& [name, p] : store.entries()) {
      if (!p.has_grad()) continue;
      Tensor<T> param = p;
      for (T& g : param.grad_mut()) g *= factor;
    }
  }
  return norm;
}

}  // namespace gcl
