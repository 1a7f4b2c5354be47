#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "xpass/compute/tensor.hpp"

namespace xpass {

template <typename T>
struct AdamState {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  // Zeroed moment buffers mirroring `params`.
  void init(std::span<const Tensor<T>> params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
      m.emplace_back(p.size(), T{0});
      v.emplace_back(p.size(), T{0});
    }
  }
};

// Bias-corrected Adam update applied in place to each parameter.
template <typename T>
void adam_step(std::span<Tensor<T>> params, std::span<const std::span<const T>> grads, AdamState<T>& state) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw DimensionError("adam_step: " + std::to_string(params.size()) + " params, " + std::to_string(grads.size()) +
                         " grads, " + std::to_string(state.m.size()) + " moment buffers");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].size() || state.m[i].size() != params[i].size() ||
        state.v[i].size() != params[i].size()) {
      throw DimensionError("adam_step: parameter " + std::to_string(i) + " of shape " +
                           shape_string(params[i].shape()) + " got gradient of size " +
                           std::to_string(grads[i].size()));
    }
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double bias1 = 1.0 - std::pow(state.beta1, t);
  const double bias2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const T g = grads[i][j];
      m[j] = b1 * m[j] + (T{1} - b1) * g;
      v[j] = b2 * v[j] + (T{1} - b2) * g * g;
      const double m_hat = static_cast<double>(m[j]) / bias1;
      const double v_hat = static_cast<double>(v[j]) / bias2;
      values[j] -= static_cast<T>(state.lr * m_hat / (std::sqrt(v_hat) + state.eps));
    }
  }
}

// Convenience overload taking gradients from the parameters' own buffers.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
  std::vector<std::span<const T>> grads;
  grads.reserve(params.size());
  for (auto& p : params) {
    if (!p.has_grad()) throw UsageError("adam_step: parameter " + shape_string(p.shape()) + " has no gradient");
    grads.push_back(std::as_const(p).grad());
  }
  adam_step<T>(params, grads, state);
}

}  // namespace xpass
