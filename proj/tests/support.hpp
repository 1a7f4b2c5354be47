#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "xpass/compute/ops.hpp"
#include "xpass/random.hpp"

namespace xpass::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  if (grad) t.set_requires_grad(true);
  return t;
}

template <typename T>
Tensor<T> random_weights(const Shape& shape, std::uint64_t seed) {
  Rng rng(seed);
  Tensor<T> w(shape);
  for (auto& v : w.data()) v = static_cast<T>(rng.uniform(-1.0, 1.0));
  return w;
}

// Tape gradient of sum(w * f()) for each input.
template <typename T>
std::vector<std::vector<double>> tape_gradients(std::vector<Tensor<T>> inputs, const std::function<Tensor<T>()>& f,
                                                const Tensor<T>& w) {
  for (auto& in : inputs) in.zero_grad();
  backward(sum(mul(f(), w)));
  std::vector<std::vector<double>> out;
  for (const auto& in : inputs) out.emplace_back(in.grad().begin(), in.grad().end());
  return out;
}

// Central differences of sum(w * f()), reduced in double, dividing by the
// step actually representable in T.
template <typename T>
std::vector<std::vector<double>> numeric_gradients(std::vector<Tensor<T>> inputs, const std::function<Tensor<T>()>& f,
                                                   const Tensor<T>& w, double h) {
  auto objective = [&] {
    NoGradGuard guard;
    const auto y = f();
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) total += static_cast<double>(w[i]) * static_cast<double>(y[i]);
    return total;
  };
  std::vector<std::vector<double>> out;
  for (auto& in : inputs) {
    std::vector<double> g(in.size());
    for (std::size_t i = 0; i < in.size(); ++i) {
      const T keep = in[i];
      const T hi = keep + static_cast<T>(h), lo = keep - static_cast<T>(h);
      in[i] = hi;
      const double up = objective();
      in[i] = lo;
      const double down = objective();
      in[i] = keep;
      g[i] = (up - down) / (static_cast<double>(hi) - static_cast<double>(lo));
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline double max_relative_error(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b,
                                 double floor) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].size(); ++i) {
      const double err = std::abs(a[t][i] - b[t][i]) / std::max({std::abs(a[t][i]), std::abs(b[t][i]), floor});
      worst = std::max(worst, err);
    }
  return worst;
}

// Worst relative error between tape and central-difference gradients of
// sum(w * f()) with random w, over every entry of every input.
template <typename T>
double max_grad_error(std::vector<Tensor<T>> inputs, const std::function<Tensor<T>()>& f, double h = 1e-6,
                      double floor = 1e-3, std::uint64_t weight_seed = 99) {
  const auto w = random_weights<T>(f().shape(), weight_seed);
  return max_relative_error(tape_gradients<T>(inputs, f, w), numeric_gradients<T>(inputs, f, w, h), floor);
}

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
  Tensor<To> out(t.shape(), std::vector<To>(t.data().begin(), t.data().end()));
  if (t.requires_grad()) out.set_requires_grad(true);
  return out;
}

}  // namespace xpass::testing
