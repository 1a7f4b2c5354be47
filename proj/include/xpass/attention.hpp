#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "xpass/compute/ops.hpp"
#include "xpass/random.hpp"

namespace xpass {

enum class AttentionMode { Canonical, ProbSparse };

inline std::string_view to_string(AttentionMode m) { return m == AttentionMode::Canonical ? "canonical" : "probsparse"; }

inline AttentionMode parse_attention_mode(std::string_view name) {
  if (name == "canonical") return AttentionMode::Canonical;
  if (name == "probsparse") return AttentionMode::ProbSparse;
  throw ConfigError("unknown attention mode '" + std::string(name) + "' (expected canonical or probsparse)");
}

struct AttentionConfig {
  std::size_t d_model = 512;
  std::size_t n_heads = 8;
  std::size_t sampling_factor = 5;
  AttentionMode mode = AttentionMode::ProbSparse;
  // Overrides the number of active queries u; only meant for experiments.
  std::optional<std::size_t> query_budget;

  void validate() const {
    if (n_heads == 0 || d_model == 0 || d_model % n_heads != 0) {
      throw ConfigError("d_model " + std::to_string(d_model) + " is not divisible by " + std::to_string(n_heads) +
                        " heads");
    }
    if (sampling_factor < 1) throw ConfigError("sampling factor must be >= 1");
  }
  std::size_t d_head() const { return d_model / n_heads; }
};

// min(length, ceil(c * ln length)), the shared budget for sampled keys and
// active queries.
inline std::size_t log_budget(std::size_t length, std::size_t factor) {
  if (length == 0) return 0;
  const double b = std::ceil(static_cast<double>(factor) * std::log(static_cast<double>(length)) - 1e-12);
  return std::min(length, static_cast<std::size_t>(std::max(0.0, b)));
}

struct SparsityReport {
  std::vector<double> scores;         // max - mean of scaled scores over sampled keys, per query
  std::vector<std::size_t> selected;  // top-u queries, by score descending
  std::size_t u = 0;
  std::size_t sampled_key_count = 0;
  std::size_t dot_product_count = 0;
};

// Optional per-call instrumentation.
struct AttentionStats {
  std::size_t dot_products = 0;
  // Attention probabilities of each computed query row, row-major, and the
  // query indices they belong to. Only filled when `record_maps` is set.
  bool record_maps = false;
  std::vector<std::vector<double>> maps;
  std::vector<std::vector<std::size_t>> map_rows;
};

namespace detail {

template <typename T>
void require_attention_shapes(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v) {
  require_matrix(q, "attention");
  require_matrix(k, "attention");
  require_matrix(v, "attention");
  if (q.cols() != k.cols()) {
    throw DimensionError("attention: query " + shape_string(q.shape()) + " and key " + shape_string(k.shape()) +
                         " widths differ");
  }
  if (k.rows() != v.rows()) {
    throw DimensionError("attention: key " + shape_string(k.shape()) + " and value " + shape_string(v.shape()) +
                         " lengths differ");
  }
}

template <typename T>
void record_map(AttentionStats* stats, const Tensor<T>& probs, std::vector<std::size_t> rows) {
  if (!stats || !stats->record_maps) return;
  stats->maps.emplace_back(probs.data().begin(), probs.data().end());
  stats->map_rows.push_back(std::move(rows));
}

}  // namespace detail

// softmax(Q K^T / sqrt(d)) V
template <typename T>
Tensor<T> canonical_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                              AttentionStats* stats = nullptr) {
  detail::require_attention_shapes(q, k, v);
  const T inv_sqrt_d = T{1} / std::sqrt(static_cast<T>(q.cols()));
  auto probs = softmax_rows(scale(matmul_nt(q, k), inv_sqrt_d));
  if (stats) {
    stats->dot_products += q.rows() * k.rows();
    std::vector<std::size_t> rows(q.rows());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    detail::record_map(stats, probs, std::move(rows));
  }
  return matmul(probs, v);
}

// Query sparsity over a key sample: M(q_i) = max_j s_ij - mean_j s_ij with
// s_ij = q_i . k_j / sqrt(d). Selects the top `u` queries (ties: lower index).
template <typename T>
SparsityReport sparsity_measure(const Tensor<T>& q, const Tensor<T>& k, const std::vector<std::size_t>& key_sample,
                                std::size_t u) {
  if (key_sample.empty()) throw UsageError("sparsity_measure: empty key sample");
  const std::size_t lq = q.rows(), d = q.cols();
  if (k.cols() != d) throw DimensionError("sparsity_measure: query and key widths differ");
  SparsityReport report;
  report.sampled_key_count = key_sample.size();
  report.scores.resize(lq);
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < lq; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (auto j : key_sample) {
      if (j >= k.rows()) throw IndexError("sparsity_measure: sampled key " + std::to_string(j) + " out of range");
      double dot = 0.0;
      for (std::size_t c = 0; c < d; ++c) dot += static_cast<double>(q(i, c)) * static_cast<double>(k(j, c));
      dot *= inv_sqrt_d;
      mx = std::max(mx, dot);
      total += dot;
    }
    report.scores[i] = mx - total / static_cast<double>(key_sample.size());
  }
  report.dot_product_count = lq * key_sample.size();
  report.u = std::min(u, lq);
  std::vector<std::size_t> order(lq);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return report.scores[a] > report.scores[b]; });
  report.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(report.u));
  return report;
}

// Sorted uniform key subset of size max(1, log_budget(L_K, c)).
inline std::vector<std::size_t> sample_keys(std::size_t key_count, std::size_t factor, std::uint64_t seed) {
  const std::size_t s = std::max<std::size_t>(1, log_budget(key_count, factor));
  Rng rng(seed);
  auto picked = rng.sample_without_replacement(key_count, s);
  std::sort(picked.begin(), picked.end());
  return picked;
}

// Only the top-u queries by sparsity attend (over all keys); the remaining
// rows take the mean of V.
template <typename T>
Tensor<T> probsparse_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                               const AttentionConfig& config, std::uint64_t seed, AttentionStats* stats = nullptr,
                               SparsityReport* report_out = nullptr) {
  detail::require_attention_shapes(q, k, v);
  const std::size_t lq = q.rows(), lk = k.rows();
  const auto keys = sample_keys(lk, config.sampling_factor, seed);
  const std::size_t u = config.query_budget ? *config.query_budget : log_budget(lq, config.sampling_factor);
  auto report = sparsity_measure(q, k, keys, u);
  report.dot_product_count += report.u * lk;
  if (stats) stats->dot_products += report.dot_product_count;

  auto filler = mean_rows(v);
  Tensor<T> out;
  if (report.u == 0) {
    out = scatter_rows(filler, filler, std::vector<std::size_t>{}, lq);
  } else {
    const T inv_sqrt_d = T{1} / std::sqrt(static_cast<T>(q.cols()));
    auto active = gather_rows(q, report.selected);
    auto probs = softmax_rows(scale(matmul_nt(active, k), inv_sqrt_d));
    detail::record_map(stats, probs, report.selected);
    out = scatter_rows(filler, matmul(probs, v), report.selected, lq);
  }
  if (report_out) *report_out = std::move(report);
  return out;
}

template <typename T>
struct MultiHeadWeights {
  std::vector<Tensor<T>> wq, wk, wv;  // per head, d_model x d_head
  Tensor<T> wo;                       // d_model x d_model

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    for (auto* group : {&wq, &wk, &wv})
      for (auto& w : *group) out.push_back(&w);
    out.push_back(&wo);
    return out;
  }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization.
template <typename T>
Tensor<T> uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor<T> t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
MultiHeadWeights<T> init_multi_head(const AttentionConfig& config, Rng& rng) {
  config.validate();
  MultiHeadWeights<T> w;
  for (std::size_t h = 0; h < config.n_heads; ++h) {
    w.wq.push_back(uniform_init<T>({config.d_model, config.d_head()}, config.d_model, rng));
    w.wk.push_back(uniform_init<T>({config.d_model, config.d_head()}, config.d_model, rng));
    w.wv.push_back(uniform_init<T>({config.d_model, config.d_head()}, config.d_model, rng));
  }
  w.wo = uniform_init<T>({config.d_model, config.d_model}, config.d_model, rng);
  return w;
}

// Heads attend independently (each with its own seed), are concatenated and
// projected by wo.
template <typename T>
Tensor<T> multi_head(const Tensor<T>& x, const MultiHeadWeights<T>& w, const AttentionConfig& config,
                     std::uint64_t seed, AttentionStats* stats = nullptr) {
  config.validate();
  if (x.cols() != config.d_model) {
    throw DimensionError("multi_head: input " + shape_string(x.shape()) + " does not have d_model = " +
                         std::to_string(config.d_model) + " columns");
  }
  if (w.wq.size() != config.n_heads || w.wk.size() != config.n_heads || w.wv.size() != config.n_heads) {
    throw ConfigError("multi_head: weights hold " + std::to_string(w.wq.size()) + " heads, config asks for " +
                      std::to_string(config.n_heads));
  }
  std::vector<Tensor<T>> heads;
  heads.reserve(config.n_heads);
  for (std::size_t h = 0; h < config.n_heads; ++h) {
    auto q = matmul(x, w.wq[h]);
    auto k = matmul(x, w.wk[h]);
    auto v = matmul(x, w.wv[h]);
    if (config.mode == AttentionMode::Canonical) {
      heads.push_back(canonical_attention(q, k, v, stats));
    } else {
      heads.push_back(probsparse_attention(q, k, v, config, mix_seed(seed, h), stats));
    }
  }
  return matmul(heads.size() == 1 ? heads.front() : concat_cols(heads), w.wo);
}

}  // namespace xpass
