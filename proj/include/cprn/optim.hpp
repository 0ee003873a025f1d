#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "cprn/params.hpp"

namespace cprn {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 16;
  int epochs = 300;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  int checkpoint_interval = 0;  // steps; 0 writes only the final checkpoint
  int patch_size = 48;
  int patches_per_image = 16;   // per epoch
  long max_steps = 0;           // 0 = run all epochs

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("train.learning_rate must be > 0");
    if (!(beta1 >= 0 && beta1 < 1)) throw ConfigError("train.beta1 must lie in [0, 1)");
    if (!(beta2 >= 0 && beta2 < 1)) throw ConfigError("train.beta2 must lie in [0, 1)");
    if (!(epsilon > 0)) throw ConfigError("train.epsilon must be > 0");
    if (!(weight_decay >= 0)) throw ConfigError("train.weight_decay must be >= 0");
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
    if (checkpoint_interval < 0) throw ConfigError("train.checkpoint_interval must be >= 0");
    if (patch_size < 1) throw ConfigError("train.patch_size must be >= 1");
    if (patches_per_image < 1) throw ConfigError("train.patches_per_image must be >= 1");
    if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
  }

  bool operator==(const TrainConfig&) const = default;
};

// First/second moments per parameter (empty for buffers) and the step count.
template <class T>
struct OptimizerState {
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
  std::uint64_t step = 0;

  static OptimizerState zeros_like(const ParamStore<T>& store) {
    OptimizerState s;
    for (const auto& p : store.params()) {
      const bool t = trainable(p.kind);
      s.m.push_back(t ? Tensor<T>(p.var.shape()) : Tensor<T>());
      s.v.push_back(t ? Tensor<T>(p.var.shape()) : Tensor<T>());
    }
    return s;
  }
};

// Bias-corrected Adam with decoupled weight decay on conv kernels only:
//   theta -= lr * wd * theta;  theta -= lr * m_hat / (sqrt(v_hat) + eps)
template <class T>
void adam_step(const ParamStore<T>& store, OptimizerState<T>& state, const TrainConfig& cfg) {
  const auto& params = store.params();
  if (state.m.size() != params.size())
    throw UsageError("optimizer state does not match the parameter set");
  for (const auto& p : params) {
    if (!trainable(p.kind)) continue;
    for (T g : p.var.grad().data())
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in parameter " + p.name);
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  const T lr = static_cast<T>(cfg.learning_rate);
  const T decay = static_cast<T>(cfg.learning_rate * cfg.weight_decay);
  const T inv_c1 = static_cast<T>(1.0 / c1);
  const T inv_sqrt_c2 = static_cast<T>(1.0 / std::sqrt(c2));
  const T eps = static_cast<T>(cfg.epsilon);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (!trainable(p.kind)) continue;
    auto theta = p.var.mutable_value().data();
    const auto g = p.var.grad().data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    const bool decays = p.kind == ParamKind::weight && cfg.weight_decay > 0;
    for (std::size_t k = 0; k < theta.size(); ++k) {
      if (decays) theta[k] -= decay * theta[k];
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      const T mhat = m[k] * inv_c1;
      const T vhat_sqrt = std::sqrt(v[k]) * inv_sqrt_c2;
      theta[k] -= lr * mhat / (vhat_sqrt + eps);
    }
  }
}

}  // namespace cprn
