#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "xpass/compute/tensor.hpp"
#include "xpass/random.hpp"

// Differentiable tensor operations. Every op computes its value eagerly and,
// when any input requires gradients, records a closure that maps the output
// gradient onto its inputs.

namespace xpass {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
MatMap<T> as_matrix(std::vector<T>& v, std::size_t r, std::size_t c) {
  return MatMap<T>(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}
template <typename T>
ConstMatMap<T> as_matrix(const std::vector<T>& v, std::size_t r, std::size_t c) {
  return ConstMatMap<T>(v.data(), static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
}

template <typename T>
void require_matrix(const Tensor<T>& t, const char* op) {
  if (t.dim() != 2) throw DimensionError(std::string(op) + " expects a matrix, got " + shape_string(t.shape()));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

template <typename T>
Node<T>& parent(Node<T>& self, std::size_t i) {
  return *self.parents[i];
}

}  // namespace detail

// c = a * b
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
  std::vector<T> out(m * n);
  detail::as_matrix(out, m, n).noalias() =
      detail::as_matrix(a.node()->data, m, k) * detail::as_matrix(b.node()->data, k, n);
  return Tensor<T>::make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](detail::Node<T>& self) {
    auto& pa = detail::parent(self, 0);
    auto& pb = detail::parent(self, 1);
    auto g = detail::as_matrix(std::as_const(self.grad), m, n);
    if (pa.requires_grad) {
      detail::as_matrix(pa.grad, m, k).noalias() += g * detail::as_matrix(std::as_const(pb.data), k, n).transpose();
    }
    if (pb.requires_grad) {
      detail::as_matrix(pb.grad, k, n).noalias() += detail::as_matrix(std::as_const(pa.data), m, k).transpose() * g;
    }
  });
}

// c = a * b^T, used for query/key scores without materializing the transpose.
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_matrix(a, "matmul_nt");
  detail::require_matrix(b, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree for " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + "^T");
  }
  std::vector<T> out(m * n);
  detail::as_matrix(out, m, n).noalias() =
      detail::as_matrix(a.node()->data, m, k) * detail::as_matrix(b.node()->data, n, k).transpose();
  return Tensor<T>::make_result({m, n}, std::move(out), {&a, &b}, [m, k, n](detail::Node<T>& self) {
    auto& pa = detail::parent(self, 0);
    auto& pb = detail::parent(self, 1);
    auto g = detail::as_matrix(std::as_const(self.grad), m, n);
    if (pa.requires_grad) {
      detail::as_matrix(pa.grad, m, k).noalias() += g * detail::as_matrix(std::as_const(pb.data), n, k);
    }
    if (pb.requires_grad) {
      detail::as_matrix(pb.grad, n, k).noalias() += g.transpose() * detail::as_matrix(std::as_const(pa.data), m, k);
    }
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      auto& in = detail::parent(self, p);
      if (!in.requires_grad) continue;
      for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), {&a, &b}, [](detail::Node<T>& self) {
    auto& pa = detail::parent(self, 0);
    auto& pb = detail::parent(self, 1);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (pa.requires_grad) pa.grad[i] += self.grad[i] * pb.data[i];
      if (pb.requires_grad) pb.grad[i] += self.grad[i] * pa.data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * factor;
  return Tensor<T>::make_result(a.shape(), std::move(out), {&a}, [factor](detail::Node<T>& self) {
    auto& in = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i] * factor;
  });
}

// Adds a length-N vector to every row of an M x N matrix.
template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& row) {
  detail::require_matrix(x, "add_row");
  const std::size_t m = x.rows(), n = x.cols();
  if (row.size() != n) {
    throw DimensionError("add_row: row of shape " + shape_string(row.shape()) + " does not match " +
                         shape_string(x.shape()));
  }
  std::vector<T> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = x[i * n + j] + row[j];
  return Tensor<T>::make_result(x.shape(), std::move(out), {&x, &row}, [m, n](detail::Node<T>& self) {
    auto& px = detail::parent(self, 0);
    auto& pr = detail::parent(self, 1);
    if (px.requires_grad)
      for (std::size_t i = 0; i < m * n; ++i) px.grad[i] += self.grad[i];
    if (pr.requires_grad)
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) pr.grad[j] += self.grad[i * n + j];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total{0};
  for (T v : a.data()) total += v;
  return Tensor<T>::make_result({1}, {total}, {&a}, [](detail::Node<T>& self) {
    auto& in = detail::parent(self, 0);
    for (auto& g : in.grad) g += self.grad[0];
  });
}

// Same values, new shape (element count must match).
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (shape_size(shape) != a.size()) {
    throw DimensionError("reshape: " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  std::vector<T> out(a.data().begin(), a.data().end());
  return Tensor<T>::make_result(std::move(shape), std::move(out), {&a}, [](detail::Node<T>& self) {
    auto& in = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i];
  });
}

// Rows [begin, begin + count) of a matrix.
template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t begin, std::size_t count) {
  detail::require_matrix(x, "slice_rows");
  const std::size_t n = x.cols();
  if (count == 0 || begin + count > x.rows()) {
    throw IndexError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") outside " + shape_string(x.shape()));
  }
  std::vector<T> out(x.data().begin() + begin * n, x.data().begin() + (begin + count) * n);
  return Tensor<T>::make_result({count, n}, std::move(out), {&x}, [begin, n](detail::Node<T>& self) {
    auto& in = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[begin * n + i] += self.grad[i];
  });
}

// Stacks matrices with equal column counts vertically.
template <typename T>
Tensor<T> concat_rows(const Tensor<T>& top, const Tensor<T>& bottom) {
  detail::require_matrix(top, "concat_rows");
  detail::require_matrix(bottom, "concat_rows");
  if (top.cols() != bottom.cols()) {
    throw DimensionError("concat_rows: " + shape_string(top.shape()) + " and " + shape_string(bottom.shape()));
  }
  const std::size_t split = top.size();
  std::vector<T> out(top.data().begin(), top.data().end());
  out.insert(out.end(), bottom.data().begin(), bottom.data().end());
  return Tensor<T>::make_result({top.rows() + bottom.rows(), top.cols()}, std::move(out), {&top, &bottom},
                                [split](detail::Node<T>& self) {
                                  auto& pt = detail::parent(self, 0);
                                  auto& pb = detail::parent(self, 1);
                                  if (pt.requires_grad)
                                    for (std::size_t i = 0; i < split; ++i) pt.grad[i] += self.grad[i];
                                  if (pb.requires_grad)
                                    for (std::size_t i = split; i < self.grad.size(); ++i)
                                      pb.grad[i - split] += self.grad[i];
                                });
}

// Places matrices with equal row counts side by side.
template <typename T>
Tensor<T> concat_cols(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  const std::size_t m = parts.front().rows();
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_matrix(p, "concat_cols");
    if (p.rows() != m) throw DimensionError("concat_cols: row counts differ at " + shape_string(p.shape()));
    offsets.push_back(total);
    total += p.cols();
  }
  std::vector<T> out(m * total);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const std::size_t w = parts[p].cols();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(parts[p].data().begin() + i * w, w, out.begin() + i * total + offsets[p]);
  }
  Tensor<T> out_tensor({m, total}, std::move(out));
  if (!grad_enabled()) return out_tensor;
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (!any) return out_tensor;
  auto& node = *out_tensor.node();
  node.requires_grad = true;
  for (const auto& p : parts) node.parents.push_back(p.node());
  node.backward_fn = [m, total, offsets](detail::Node<T>& self) {
    for (std::size_t p = 0; p < self.parents.size(); ++p) {
      auto& in = *self.parents[p];
      if (!in.requires_grad) continue;
      const std::size_t w = in.shape[1];
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < w; ++j) in.grad[i * w + j] += self.grad[i * total + offsets[p] + j];
    }
  };
  return out_tensor;
}

// Selected rows, in the given order.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const std::size_t> indices) {
  detail::require_matrix(x, "gather_rows");
  const std::size_t n = x.cols();
  if (indices.empty()) throw DimensionError("gather_rows: empty index set");
  std::vector<T> out(indices.size() * n);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= x.rows()) throw IndexError("gather_rows: row " + std::to_string(indices[r]) + " out of range");
    std::copy_n(x.data().begin() + indices[r] * n, n, out.begin() + r * n);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return Tensor<T>::make_result({idx.size(), n}, std::move(out), {&x}, [idx, n](detail::Node<T>& self) {
    auto& in = detail::parent(self, 0);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < n; ++j) in.grad[idx[r] * n + j] += self.grad[r * n + j];
  });
}

// Mean of the rows: M x N -> 1 x N.
template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
  detail::require_matrix(x, "mean_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<T> out(n, T{0});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j] += x[i * n + j];
  for (auto& v : out) v /= static_cast<T>(m);
  return Tensor<T>::make_result({1, n}, std::move(out), {&x}, [m, n](detail::Node<T>& self) {
    auto& in = detail::parent(self, 0);
    const T inv = T{1} / static_cast<T>(m);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) in.grad[i * n + j] += self.grad[j] * inv;
  });
}

// Builds a `length` x N matrix whose rows at `indices` come from `rows` and
// whose other rows are copies of `filler` (1 x N).
template <typename T>
Tensor<T> scatter_rows(const Tensor<T>& filler, const Tensor<T>& rows, std::span<const std::size_t> indices,
                       std::size_t length) {
  const std::size_t n = filler.cols();
  if (filler.size() != n) throw DimensionError("scatter_rows: filler must be a single row");
  if (!indices.empty() && (rows.cols() != n || rows.rows() != indices.size())) {
    throw DimensionError("scatter_rows: rows " + shape_string(rows.shape()) + " vs " +
                         std::to_string(indices.size()) + " indices of width " + std::to_string(n));
  }
  std::vector<std::int64_t> source(length, -1);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= length) throw IndexError("scatter_rows: index out of range");
    source[indices[r]] = static_cast<std::int64_t>(r);
  }
  std::vector<T> out(length * n);
  for (std::size_t i = 0; i < length; ++i) {
    auto src = source[i] < 0 ? filler.data().begin() : rows.data().begin() + source[i] * n;
    std::copy_n(src, n, out.begin() + i * n);
  }
  return Tensor<T>::make_result({length, n}, std::move(out), {&filler, &rows}, [source, n](detail::Node<T>& self) {
    auto& pf = detail::parent(self, 0);
    auto& pr = detail::parent(self, 1);
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (source[i] < 0) {
        if (pf.requires_grad)
          for (std::size_t j = 0; j < n; ++j) pf.grad[j] += self.grad[i * n + j];
      } else if (pr.requires_grad) {
        for (std::size_t j = 0; j < n; ++j) pr.grad[source[i] * n + j] += self.grad[i * n + j];
      }
    }
  });
}

// Row-wise softmax with max subtraction.
template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
  const std::size_t n = x.cols(), m = x.size() / n;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < m; ++i) {
    const T* in = x.data().data() + i * n;
    T* o = out.data() + i * n;
    const T mx = *std::max_element(in, in + n);
    T total{0};
    for (std::size_t j = 0; j < n; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < n; ++j) o[j] /= total;
  }
  return Tensor<T>::make_result(x.shape(), std::move(out), {&x}, [m, n](detail::Node<T>& self) {
    auto& in = detail::parent(self, 0);
    for (std::size_t i = 0; i < m; ++i) {
      const T* y = self.data.data() + i * n;
      const T* g = self.grad.data() + i * n;
      T dot{0};
      for (std::size_t j = 0; j < n; ++j) dot += g[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) in.grad[i * n + j] += y[j] * (g[j] - dot);
    }
  });
}

template <typename T>
Tensor<T> elu(const Tensor<T>& x) {
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] >= T{0} ? x[i] : std::expm1(x[i]);
  return Tensor<T>::make_result(x.shape(), std::move(out), {&x}, [](detail::Node<T>& self) {
    auto& in = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const T slope = in.data[i] >= T{0} ? T{1} : self.data[i] + T{1};
      in.grad[i] += self.grad[i] * slope;
    }
  });
}

// Width-3 cross-correlation over the row axis with one row of zero padding on
// each end: out[l] = x[l-1] W[0] + x[l] W[1] + x[l+1] W[2].
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernel) {
  detail::require_matrix(x, "conv1d");
  if (kernel.dim() != 3 || kernel.shape()[0] != 3) {
    throw DimensionError("conv1d: kernel must be 3 x C_in x C_out, got " + shape_string(kernel.shape()));
  }
  const std::size_t len = x.rows(), cin = x.cols(), cout = kernel.shape()[2];
  if (kernel.shape()[1] != cin) {
    throw DimensionError("conv1d: input " + shape_string(x.shape()) + " has " + std::to_string(cin) +
                         " channels, kernel " + shape_string(kernel.shape()) + " expects " +
                         std::to_string(kernel.shape()[1]));
  }
  using Idx = Eigen::Index;
  const auto L = static_cast<Idx>(len), Ci = static_cast<Idx>(cin), Co = static_cast<Idx>(cout);
  std::vector<T> out(len * cout, T{0});
  {
    auto X = detail::as_matrix(x.node()->data, len, cin);
    auto W = detail::as_matrix(kernel.node()->data, 3 * cin, cout);
    auto Y = detail::as_matrix(out, len, cout);
    Y.noalias() += X * W.middleRows(Ci, Ci);
    if (L > 1) {
      Y.bottomRows(L - 1).noalias() += X.topRows(L - 1) * W.topRows(Ci);
      Y.topRows(L - 1).noalias() += X.bottomRows(L - 1) * W.bottomRows(Ci);
    }
  }
  return Tensor<T>::make_result({len, cout}, std::move(out), {&x, &kernel}, [L, Ci, Co](detail::Node<T>& self) {
    auto& px = detail::parent(self, 0);
    auto& pw = detail::parent(self, 1);
    auto G = detail::as_matrix(std::as_const(self.grad), L, Co);
    if (px.requires_grad) {
      auto W = detail::as_matrix(std::as_const(pw.data), 3 * Ci, Co);
      auto dX = detail::as_matrix(px.grad, L, Ci);
      dX.noalias() += G * W.middleRows(Ci, Ci).transpose();
      if (L > 1) {
        dX.topRows(L - 1).noalias() += G.bottomRows(L - 1) * W.topRows(Ci).transpose();
        dX.bottomRows(L - 1).noalias() += G.topRows(L - 1) * W.bottomRows(Ci).transpose();
      }
    }
    if (pw.requires_grad) {
      auto X = detail::as_matrix(std::as_const(px.data), L, Ci);
      auto dW = detail::as_matrix(pw.grad, 3 * Ci, Co);
      dW.middleRows(Ci, Ci).noalias() += X.transpose() * G;
      if (L > 1) {
        dW.topRows(Ci).noalias() += X.topRows(L - 1).transpose() * G.bottomRows(L - 1);
        dW.bottomRows(Ci).noalias() += X.bottomRows(L - 1).transpose() * G.topRows(L - 1);
      }
    }
  });
}

// Window 3, stride 2, one zero of padding at each end along the row axis.
// Output has ceil(L / 2) rows. The gradient goes to the first maximal entry
// of each window; if that entry is padding it is dropped.
template <typename T>
Tensor<T> maxpool1d(const Tensor<T>& x) {
  detail::require_matrix(x, "maxpool1d");
  const std::size_t len = x.rows(), c = x.cols();
  const std::size_t out_len = (len + 1) / 2;
  std::vector<T> out(out_len * c);
  // argmax row per output cell; -1 marks padding.
  std::vector<std::int64_t> arg(out_len * c);
  for (std::size_t j = 0; j < out_len; ++j) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      T best = std::numeric_limits<T>::lowest();
      std::int64_t best_row = -2;
      for (std::int64_t r = 2 * static_cast<std::int64_t>(j) - 1; r <= 2 * static_cast<std::int64_t>(j) + 1; ++r) {
        const bool pad = r < 0 || r >= static_cast<std::int64_t>(len);
        const T v = pad ? T{0} : x[static_cast<std::size_t>(r) * c + ch];
        if (best_row == -2 || v > best) {
          best = v;
          best_row = pad ? -1 : r;
        }
      }
      out[j * c + ch] = best;
      arg[j * c + ch] = best_row;
    }
  }
  return Tensor<T>::make_result({out_len, c}, std::move(out), {&x}, [arg, c](detail::Node<T>& self) {
    auto& in = detail::parent(self, 0);
    for (std::size_t i = 0; i < arg.size(); ++i) {
      if (arg[i] >= 0) in.grad[static_cast<std::size_t>(arg[i]) * c + i % c] += self.grad[i];
    }
  });
}

// Per-row normalization to zero mean and unit (biased) variance, then affine.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5)) {
  const std::size_t d = x.cols(), m = x.size() / d;
  if (gamma.size() != d || beta.size() != d) {
    throw DimensionError("layer_norm: gamma/beta " + shape_string(gamma.shape()) + "/" + shape_string(beta.shape()) +
                         " vs input " + shape_string(x.shape()));
  }
  std::vector<T> out(x.size());
  std::vector<T> xhat(x.size());
  std::vector<T> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    const T* row = x.data().data() + i * d;
    T mean{0};
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<T>(d);
    T var{0};
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<T>(d);
    inv_std[i] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mean) * inv_std[i];
      out[i * d + j] = xhat[i * d + j] * gamma[j] + beta[j];
    }
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), {&x, &gamma, &beta},
      [xhat = std::move(xhat), inv_std = std::move(inv_std), m, d](detail::Node<T>& self) {
        auto& px = detail::parent(self, 0);
        auto& pg = detail::parent(self, 1);
        auto& pb = detail::parent(self, 2);
        for (std::size_t i = 0; i < m; ++i) {
          const T* g = self.grad.data() + i * d;
          const T* xh = xhat.data() + i * d;
          if (pg.requires_grad)
            for (std::size_t j = 0; j < d; ++j) pg.grad[j] += g[j] * xh[j];
          if (pb.requires_grad)
            for (std::size_t j = 0; j < d; ++j) pb.grad[j] += g[j];
          if (!px.requires_grad) continue;
          T mean_dxhat{0}, mean_dxhat_xhat{0};
          for (std::size_t j = 0; j < d; ++j) {
            const T dxh = g[j] * pg.data[j];
            mean_dxhat += dxh;
            mean_dxhat_xhat += dxh * xh[j];
          }
          mean_dxhat /= static_cast<T>(d);
          mean_dxhat_xhat /= static_cast<T>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const T dxh = g[j] * pg.data[j];
            px.grad[i * d + j] += inv_std[i] * (dxh - mean_dxhat - xh[j] * mean_dxhat_xhat);
          }
        }
      });
}

// Mean over rows of -log softmax(logits)[label]. A 1-D logits tensor is one row.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels) {
  const std::size_t k = logits.cols(), b = logits.size() / k;
  if (labels.size() != b) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(b) +
                         " rows");
  }
  std::vector<T> probs(logits.size());
  T total{0};
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= k) {
      throw IndexError("cross_entropy: label " + std::to_string(labels[i]) + " outside [0, " + std::to_string(k) + ")");
    }
    const T* row = logits.data().data() + i * k;
    const T mx = *std::max_element(row, row + k);
    T z{0};
    for (std::size_t j = 0; j < k; ++j) z += (probs[i * k + j] = std::exp(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) probs[i * k + j] /= z;
    total += std::log(z) + mx - row[labels[i]];
  }
  const T loss = total / static_cast<T>(b);
  if (!std::isfinite(loss)) throw NumericError("cross_entropy: non-finite loss");
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return Tensor<T>::make_result({1}, {loss}, {&logits},
                                [probs = std::move(probs), lab = std::move(lab), b, k](detail::Node<T>& self) {
                                  auto& in = detail::parent(self, 0);
                                  const T s = self.grad[0] / static_cast<T>(b);
                                  for (std::size_t i = 0; i < b; ++i)
                                    for (std::size_t j = 0; j < k; ++j)
                                      in.grad[i * k + j] +=
                                          s * (probs[i * k + j] - (j == lab[i] ? T{1} : T{0}));
                                });
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::size_t label) {
  return cross_entropy(logits, std::span<const std::size_t>(&label, 1));
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

}  // namespace xpass

namespace xpass {

// Inverted dropout with a seeded mask; identity when rate == 0.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, double rate, std::uint64_t seed) {
  if (rate <= 0.0) return x;
  Rng rng(seed);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  std::vector<T> mask(x.size());
  for (auto& m : mask) m = rng.uniform() < rate ? T{0} : keep_scale;
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * mask[i];
  return Tensor<T>::make_result(x.shape(), std::move(out), {&x}, [mask = std::move(mask)](detail::Node<T>& self) {
    auto& in = detail::parent(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += self.grad[i] * mask[i];
  });
}

}  // namespace xpass
