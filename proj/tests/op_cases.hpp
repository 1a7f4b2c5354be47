#pragma once

#include <functional>
#include <vector>

#include "support.hpp"

namespace xpass::testing {

// Every differentiable op on small random inputs, shared by the gradient
// checks.
template <typename T>
struct OpInputs {
  Tensor<T> a, b, c, row, gain, kernel, other;
  std::vector<Tensor<T>*> all() { return {&a, &b, &c, &row, &gain, &kernel, &other}; }
};

template <typename T>
struct OpCase {
  const char* name;
  std::vector<Tensor<T>> inputs;
  std::function<Tensor<T>()> f;
};

template <typename T>
std::vector<OpCase<T>> op_cases(OpInputs<T>& in) {
  static const std::vector<std::size_t> idx{3, 0};
  static const std::vector<std::size_t> labels{0, 4, 2, 1};
  auto& [a, b, c, row, gain, kernel, other] = in;
  return {
      {"matmul", {a, b}, [&] { return matmul(a, b); }},
      {"matmul_nt", {a, c}, [&] { return matmul_nt(a, c); }},
      {"add", {a, c}, [&] { return add(a, c); }},
      {"mul", {a, c}, [&] { return mul(a, c); }},
      {"scale", {a}, [&] { return scale(a, T(-1.7)); }},
      {"add_row", {a, row}, [&] { return add_row(a, row); }},
      {"reshape", {a}, [&] { return reshape(a, {20}); }},
      {"slice_rows", {a}, [&] { return slice_rows(a, 1, 2); }},
      {"concat_rows", {a, c}, [&] { return concat_rows(a, c); }},
      {"concat_cols", {a, other}, [&] { return concat_cols(std::vector<Tensor<T>>{a, other}); }},
      {"gather_rows", {a}, [&] { return gather_rows(a, std::span<const std::size_t>(idx)); }},
      {"mean_rows", {a}, [&] { return mean_rows(a); }},
      {"scatter_rows",
       {row, a},
       [&] {
         return scatter_rows(reshape(row, {1, 5}), slice_rows(a, 0, 2), std::span<const std::size_t>(idx), 4);
       }},
      {"softmax_rows", {a}, [&] { return softmax_rows(scale(a, T(3))); }},
      {"elu", {a}, [&] { return elu(scale(a, T(2))); }},
      {"conv1d", {a, kernel}, [&] { return conv1d(a, kernel); }},
      {"maxpool1d", {a}, [&] { return maxpool1d(a); }},
      {"layer_norm", {a, gain, row}, [&] { return layer_norm(a, gain, row); }},
      {"cross_entropy", {a}, [&] { return cross_entropy(scale(a, T(2)), std::span<const std::size_t>(labels)); }},
      {"sum", {a}, [&] { return sum(mul(a, a)); }},
      {"dropout", {a}, [&] { return dropout(a, 0.3, 5); }},
  };
}

template <typename T>
OpInputs<T> random_op_inputs(std::uint64_t seed) {
  Rng rng(seed);
  OpInputs<T> in;
  in.a = random_tensor<T>({4, 5}, rng);
  in.b = random_tensor<T>({5, 3}, rng);
  in.c = random_tensor<T>({4, 5}, rng);
  in.row = random_tensor<T>({5}, rng);
  in.gain = random_tensor<T>({5}, rng, 0.5, 1.5);
  in.kernel = random_tensor<T>({3, 5, 2}, rng);
  in.other = random_tensor<T>({4, 3}, rng);
  return in;
}

}  // namespace xpass::testing
