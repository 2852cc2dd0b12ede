#pragma once

#include <cmath>
#include <vector>

#include "advlab/error.hpp"
#include "advlab/gradcore/model_grad.hpp"
#include "advlab/train/train_config.hpp"
#include "advlab/zoo/classifier.hpp"

namespace advlab {

/// Optimizer slots and the step counter. The counter advances once per
/// optimizer_step call, so Free AT advances it `replay` times per batch.
template <std::floating_point T>
struct OptimizerState {
  std::size_t step = 0;
  std::vector<Tensor<T>> first;   // momentum velocity, or Adam m
  std::vector<Tensor<T>> second;  // Adam v
};

/// Global-norm clipping, decoupled weight decay θ ← θ − lr·wd·θ, then the
/// optimizer rule. SGD momentum follows v ← μv − lr·g, θ ← θ + v.
/// Returns the learning rate used.
template <std::floating_point T>
double optimizer_step(std::vector<NamedTensor<T>>& params, GradientMap<T> grads, const TrainConfig& config,
                      OptimizerState<T>& state) {
  if (grads.size() != params.size()) throw ShapeError("optimizer_step: gradient/parameter count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].value.shape() != params[i].value.shape()) {
      throw ShapeError("optimizer_step: gradient for '" + params[i].name + "' has wrong shape");
    }
  }
  if (state.first.empty()) {
    for (const auto& p : params) {
      state.first.emplace_back(p.value.shape());
      state.second.emplace_back(p.value.shape());
    }
  }
  if (config.clipnorm) {
    double sq = 0;
    for (const auto& g : grads) {
      for (const T v : g.value.data()) sq += static_cast<double>(v) * static_cast<double>(v);
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("optimizer_step: non-finite gradient norm");
    if (norm > *config.clipnorm) {
      const T scale = static_cast<T>(*config.clipnorm / norm);
      for (auto& g : grads) {
        for (T& v : g.value.data()) v *= scale;
      }
    }
  }
  const double lr = lr_at_step(config, state.step);
  ++state.step;
  const T lr_t = static_cast<T>(lr);
  const T decay = static_cast<T>(lr * config.weight_decay);
  double bias1 = 1, bias2 = 1;
  if (config.optimizer == OptimizerKind::adam) {
    bias1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
    bias2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  }
  const T adam_lr = static_cast<T>(lr * std::sqrt(bias2) / bias1);
  const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
  const T eps = static_cast<T>(config.adam_epsilon), mu = static_cast<T>(config.momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].value.data();
    const auto g = grads[i].value.data();
    auto m = state.first[i].data();
    auto v = state.second[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      if (decay != T{0}) theta[j] -= decay * theta[j];
      if (config.optimizer == OptimizerKind::sgd_momentum) {
        m[j] = mu * m[j] - lr_t * g[j];
        theta[j] += m[j];
      } else {
        m[j] = b1 * m[j] + (T{1} - b1) * g[j];
        v[j] = b2 * v[j] + (T{1} - b2) * g[j] * g[j];
        theta[j] -= adam_lr * m[j] / (std::sqrt(v[j]) + eps);
      }
      if (!std::isfinite(theta[j])) {
        throw NumericError("optimizer_step: non-finite update in '" + params[i].name + "'");
      }
    }
  }
  return lr;
}

}  // namespace advlab
