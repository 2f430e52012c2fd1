#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "cgflow/errors.hpp"
#include "cgflow/tensor.hpp"

namespace cgflow {

// AdamW with decoupled weight decay:
//   p <- p - lr * mhat / (sqrt(vhat) + eps) - lr * wd * p
// With wd = 0 this is exactly Adam.
struct AdamWState {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-2;
  std::uint64_t step_count = 0;
  std::vector<Tensor> m;  // first moments, one per parameter tensor
  std::vector<Tensor> v;  // second moments
};

inline void adamw_step(AdamWState& state, const std::vector<Tensor*>& params,
                       const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size())
    throw ShapeMismatch("adamw: parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->rows(), p->cols());
      state.v.emplace_back(p->rows(), p->cols());
    }
  }
  if (state.m.size() != params.size())
    throw ShapeMismatch("adamw: state tracks a different parameter count");

  state.step_count += 1;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));

  for (std::size_t t = 0; t < params.size(); ++t) {
    Tensor& p = *params[t];
    const Tensor& g = *grads[t];
    if (!p.same_shape(g) || !p.same_shape(state.m[t]))
      throw ShapeMismatch("adamw: shape mismatch at parameter " + std::to_string(t));
    if (!g.all_finite()) throw NonFiniteGradient("non-finite gradient at parameter " + std::to_string(t));
    Tensor& m = state.m[t];
    Tensor& v = state.v[t];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p[k] -= state.learning_rate * (mhat / (std::sqrt(vhat) + state.epsilon) +
                                     state.weight_decay * p[k]);
    }
  }
}

}  // namespace cgflow
