#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "support.hpp"
#include "xpass/attention.hpp"

using namespace xpass;
using xpass::testing::random_tensor;

namespace {

using Matrix = std::vector<std::vector<double>>;

Matrix to_rows(const Tensor<double>& t) {
  Matrix m(t.rows(), std::vector<double>(t.cols()));
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t c = 0; c < t.cols(); ++c) m[r][c] = t(r, c);
  return m;
}

// Plain loops, no library ops.
Matrix loop_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
  const std::size_t d = q[0].size();
  Matrix out(q.size(), std::vector<double>(v[0].size(), 0.0));
  for (std::size_t i = 0; i < q.size(); ++i) {
    std::vector<double> s(k.size());
    double mx = -1e300;
    for (std::size_t j = 0; j < k.size(); ++j) {
      double dot = 0;
      for (std::size_t c = 0; c < d; ++c) dot += q[i][c] * k[j][c];
      s[j] = dot / std::sqrt(double(d));
      mx = std::max(mx, s[j]);
    }
    double z = 0;
    for (auto& e : s) z += (e = std::exp(e - mx));
    for (std::size_t j = 0; j < k.size(); ++j)
      for (std::size_t c = 0; c < v[0].size(); ++c) out[i][c] += s[j] / z * v[j][c];
  }
  return out;
}

double max_abs_diff(const Tensor<double>& a, const Matrix& b) {
  double worst = 0;
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t c = 0; c < a.cols(); ++c) worst = std::max(worst, std::abs(a(r, c) - b[r][c]));
  return worst;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) { return max_abs_diff(a, to_rows(b)); }

Tensor<double> identity(std::size_t n) {
  Tensor<double> t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

}  // namespace

TEST(Canonical, SingleTokenReturnsValue) {
  auto q = Tensor<double>::matrix({{0.3, -2.0}});
  auto k = Tensor<double>::matrix({{5.0, 1.0}});
  auto v = Tensor<double>::matrix({{7.0, -1.5, 2.25}});
  auto out = canonical_attention(q, k, v);
  ASSERT_EQ(out.shape(), (Shape{1, 3}));
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(out(0, c), v(0, c));
}

TEST(Canonical, OrthogonalQueryGivesMeanOfValues) {
  auto q = Tensor<double>::matrix({{0.0, 1.0}, {0.0, -3.0}});
  auto k = Tensor<double>::matrix({{1.0, 0.0}, {2.0, 0.0}, {-4.0, 0.0}});
  auto v = Tensor<double>::matrix({{1.0, 2.0}, {3.0, 5.0}, {8.0, -1.0}});
  auto out = canonical_attention(q, k, v);
  for (std::size_t r = 0; r < 2; ++r) {
    EXPECT_NEAR(out(r, 0), 4.0, 1e-12);
    EXPECT_NEAR(out(r, 1), 2.0, 1e-12);
  }
}

TEST(Canonical, MatchesLoopOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    auto q = random_tensor<double>({4, 8}, rng, -2, 2, false);
    auto k = random_tensor<double>({6, 8}, rng, -2, 2, false);
    auto v = random_tensor<double>({6, 5}, rng, -2, 2, false);
    EXPECT_LT(max_abs_diff(canonical_attention(q, k, v), loop_attention(to_rows(q), to_rows(k), to_rows(v))), 1e-6);
  }
}

TEST(Canonical, ShapeErrors) {
  Tensor<double> q({3, 4}), k({5, 3}), v({5, 2}), v_short({4, 2});
  EXPECT_THROW(canonical_attention(q, k, v), DimensionError);
  EXPECT_THROW(canonical_attention(q, Tensor<double>({5, 4}), v_short), DimensionError);
}

TEST(Canonical, PermutingValueColumnsPermutesOutput) {
  Rng rng(8);
  auto q = random_tensor<double>({7, 4}, rng, -1, 1, false);
  auto k = random_tensor<double>({9, 4}, rng, -1, 1, false);
  auto v = random_tensor<double>({9, 6}, rng, -1, 1, false);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  Tensor<double> vp({9, 6});
  for (std::size_t r = 0; r < 9; ++r)
    for (std::size_t c = 0; c < 6; ++c) vp(r, c) = v(r, perm[c]);
  auto out = canonical_attention(q, k, v), outp = canonical_attention(q, k, vp);
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t c = 0; c < 6; ++c) EXPECT_NEAR(outp(r, c), out(r, perm[c]), 1e-12);
}

TEST(Sparsity, IdenticalScoresGiveZero) {
  auto q = Tensor<double>::matrix({{1.0, 2.0}});
  auto k = Tensor<double>::matrix({{0.5, 0.5}, {0.5, 0.5}, {0.5, 0.5}});
  auto rep = sparsity_measure(q, k, {0, 1, 2}, 1);
  EXPECT_DOUBLE_EQ(rep.scores[0], 0.0);
}

TEST(Sparsity, OneDominantKey) {
  // d = 1 so the scaled score is the raw product.
  for (std::size_t m : {2u, 5u, 12u}) {
    auto q = Tensor<double>::matrix({{1.0}});
    Tensor<double> k({m, 1});
    k(0, 0) = 10.0;
    std::vector<std::size_t> all(m);
    std::iota(all.begin(), all.end(), std::size_t{0});
    auto rep = sparsity_measure(q, k, all, 1);
    EXPECT_NEAR(rep.scores[0], 10.0 - 10.0 / double(m), 1e-12);
    EXPECT_EQ(rep.dot_product_count, m);
  }
}

TEST(Sparsity, MatchesBruteForceAndSelectsTopQueries) {
  Rng rng(21);
  auto q = random_tensor<double>({20, 6}, rng, -2, 2, false);
  auto k = random_tensor<double>({30, 6}, rng, -2, 2, false);
  const auto keys = sample_keys(30, 3, 77);
  EXPECT_EQ(keys.size(), log_budget(30, 3));
  auto rep = sparsity_measure(q, k, keys, 7);
  EXPECT_EQ(rep.u, 7u);
  EXPECT_EQ(rep.sampled_key_count, keys.size());
  EXPECT_EQ(rep.dot_product_count, 20 * keys.size());
  for (std::size_t i = 0; i < 20; ++i) {
    double mx = -1e300, total = 0;
    for (auto j : keys) {
      double dot = 0;
      for (std::size_t c = 0; c < 6; ++c) dot += q(i, c) * k(j, c);
      dot /= std::sqrt(6.0);
      mx = std::max(mx, dot);
      total += dot;
    }
    EXPECT_NEAR(rep.scores[i], mx - total / double(keys.size()), 1e-12);
  }
  std::set<std::size_t> unique(rep.selected.begin(), rep.selected.end());
  EXPECT_EQ(unique.size(), rep.selected.size());
  for (std::size_t a = 1; a < rep.selected.size(); ++a)
    EXPECT_GE(rep.scores[rep.selected[a - 1]], rep.scores[rep.selected[a]]);
  const double cutoff = rep.scores[rep.selected.back()];
  for (std::size_t i = 0; i < 20; ++i)
    if (!unique.count(i)) { EXPECT_LE(rep.scores[i], cutoff); }
}

TEST(Sparsity, EmptySampleIsUsageError) {
  Tensor<double> q({2, 2}), k({3, 2});
  EXPECT_THROW(sparsity_measure(q, k, {}, 1), UsageError);
}

TEST(Budget, LogBudgetValues) {
  EXPECT_EQ(log_budget(0, 5), 0u);
  EXPECT_EQ(log_budget(1, 5), 0u);
  EXPECT_EQ(log_budget(2, 5), 2u);     // ceil(3.47) = 4, capped at 2
  EXPECT_EQ(log_budget(51, 5), 20u);   // ceil(19.66)
  EXPECT_EQ(log_budget(1024, 5), 35u); // ceil(34.66)
  EXPECT_EQ(log_budget(100, 1), 5u);   // ceil(4.61)
}

TEST(ProbSparse, EqualsCanonicalWhenEveryQueryIsActive) {
  Rng rng(5);
  AttentionConfig cfg;
  cfg.sampling_factor = 50;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t lq = 2 + rng.below(31), lk = 2 + rng.below(31), d = 1 + rng.below(16);
    auto q = random_tensor<double>({lq, d}, rng, -2, 2, false);
    auto k = random_tensor<double>({lk, d}, rng, -2, 2, false);
    auto v = random_tensor<double>({lk, 3}, rng, -2, 2, false);
    SparsityReport rep;
    auto out = probsparse_attention(q, k, v, cfg, 100 + trial, nullptr, &rep);
    ASSERT_EQ(rep.u, lq);
    EXPECT_LT(max_abs_diff(out, canonical_attention(q, k, v)), 1e-5);
  }
}

TEST(ProbSparse, Equivalence16x32Float) {
  Rng rng(6);
  AttentionConfig cfg;
  cfg.sampling_factor = 10;  // ceil(10 ln 16) = 28 >= 16
  auto q = random_tensor<float>({16, 8}, rng, -1, 1, false);
  auto k = random_tensor<float>({32, 8}, rng, -1, 1, false);
  auto v = random_tensor<float>({32, 8}, rng, -1, 1, false);
  auto a = probsparse_attention(q, k, v, cfg, 9), b = canonical_attention(q, k, v);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(ProbSparse, ZeroBudgetGivesMeanEverywhere) {
  Rng rng(7);
  AttentionConfig cfg;
  cfg.query_budget = 0;
  auto q = random_tensor<double>({5, 4}, rng, -1, 1, false);
  auto k = random_tensor<double>({6, 4}, rng, -1, 1, false);
  auto v = random_tensor<double>({6, 3}, rng, -1, 1, false);
  auto out = probsparse_attention(q, k, v, cfg, 1);
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0;
    for (std::size_t r = 0; r < 6; ++r) mean += v(r, c) / 6.0;
    for (std::size_t r = 0; r < 5; ++r) EXPECT_NEAR(out(r, c), mean, 1e-12);
  }
}

TEST(ProbSparse, LazyRowsAreMeanAndActiveRowsAreExact) {
  Rng rng(12);
  AttentionConfig cfg;
  cfg.sampling_factor = 2;
  auto q = random_tensor<double>({40, 8}, rng, -1, 1, false);
  auto k = random_tensor<double>({40, 8}, rng, -1, 1, false);
  auto v = random_tensor<double>({40, 4}, rng, -1, 1, false);
  SparsityReport rep;
  auto out = probsparse_attention(q, k, v, cfg, 3, nullptr, &rep);
  EXPECT_EQ(rep.u, log_budget(40, 2));
  ASSERT_LT(rep.u, 40u);
  const auto full = canonical_attention(q, k, v);
  const std::set<std::size_t> active(rep.selected.begin(), rep.selected.end());
  for (std::size_t r = 0; r < 40; ++r) {
    for (std::size_t c = 0; c < 4; ++c) {
      double mean = 0;
      for (std::size_t j = 0; j < 40; ++j) mean += v(j, c) / 40.0;
      EXPECT_NEAR(out(r, c), active.count(r) ? full(r, c) : mean, 1e-12);
    }
  }
}

TEST(ProbSparse, ActiveRowsAreStochastic) {
  Rng rng(13);
  AttentionConfig cfg;
  AttentionStats stats;
  stats.record_maps = true;
  auto q = random_tensor<double>({64, 8}, rng, -3, 3, false);
  auto k = random_tensor<double>({64, 8}, rng, -3, 3, false);
  auto v = random_tensor<double>({64, 8}, rng, -3, 3, false);
  probsparse_attention(q, k, v, cfg, 4, &stats);
  ASSERT_EQ(stats.maps.size(), 1u);
  const auto& m = stats.maps[0];
  ASSERT_EQ(m.size(), stats.map_rows[0].size() * 64);
  for (std::size_t r = 0; r < stats.map_rows[0].size(); ++r) {
    double total = 0;
    for (std::size_t j = 0; j < 64; ++j) {
      EXPECT_GE(m[r * 64 + j], 0.0);
      total += m[r * 64 + j];
    }
    EXPECT_NEAR(total, 1.0, 1e-6);
  }
}

TEST(ProbSparse, DeterministicUnderSeed) {
  Rng rng(14);
  AttentionConfig cfg;
  auto q = random_tensor<float>({50, 8}, rng, -1, 1, false);
  auto k = random_tensor<float>({50, 8}, rng, -1, 1, false);
  auto v = random_tensor<float>({50, 8}, rng, -1, 1, false);
  EXPECT_EQ(sample_keys(50, 5, 99), sample_keys(50, 5, 99));
  SparsityReport r1, r2;
  auto a = probsparse_attention(q, k, v, cfg, 99, nullptr, &r1);
  auto b = probsparse_attention(q, k, v, cfg, 99, nullptr, &r2);
  EXPECT_EQ(r1.selected, r2.selected);
  ASSERT_EQ(a.size(), b.size());
  EXPECT_EQ(std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(float)), 0);
}

TEST(ProbSparse, SampledKeysAreSortedUniqueInRange) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto keys = sample_keys(100, 5, seed);
    ASSERT_EQ(keys.size(), 24u);
    EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
    EXPECT_EQ(std::set<std::size_t>(keys.begin(), keys.end()).size(), keys.size());
    EXPECT_LT(keys.back(), 100u);
  }
}

TEST(ProbSparse, DotProductCountWithinBound) {
  Rng rng(15);
  AttentionConfig cfg;
  for (std::size_t lq : {8u, 25u, 51u}) {
    for (std::size_t lk : {8u, 26u, 51u}) {
      auto q = random_tensor<double>({lq, 4}, rng, -1, 1, false);
      auto k = random_tensor<double>({lk, 4}, rng, -1, 1, false);
      auto v = random_tensor<double>({lk, 4}, rng, -1, 1, false);
      AttentionStats stats;
      probsparse_attention(q, k, v, cfg, 1, &stats);
      const auto c = double(cfg.sampling_factor);
      const double bound = lq * std::ceil(c * std::log(double(lk))) + std::ceil(c * std::log(double(lq))) * lk;
      EXPECT_LE(double(stats.dot_products), bound);
      EXPECT_EQ(stats.dot_products, lq * sample_keys(lk, 5, 1).size() + log_budget(lq, 5) * lk);
    }
  }
}

TEST(ProbSparse, CountGrowsAsLLogL) {
  AttentionConfig cfg;
  Rng rng(16);
  std::vector<double> sparse_ratio, dense_ratio;
  for (std::size_t l : {64u, 128u, 256u, 512u, 1024u}) {
    auto q = random_tensor<double>({l, 4}, rng, -1, 1, false);
    auto k = random_tensor<double>({l, 4}, rng, -1, 1, false);
    auto v = random_tensor<double>({l, 4}, rng, -1, 1, false);
    AttentionStats sparse, dense;
    probsparse_attention(q, k, v, cfg, 2, &sparse);
    canonical_attention(q, k, v, &dense);
    const double llogl = double(l) * std::log(double(l));
    sparse_ratio.push_back(double(sparse.dot_products) / llogl);
    dense_ratio.push_back(double(dense.dot_products) / llogl);
    EXPECT_EQ(dense.dot_products, l * l);
  }
  // One alpha bounds every length; fit it on the smallest.
  const double alpha = sparse_ratio.front() * 1.05;
  for (double r : sparse_ratio) EXPECT_LE(r, alpha);
  // The dense ratio grows like L / ln L, over 9x across the range.
  EXPECT_GT(dense_ratio.back() / dense_ratio.front(), 9.0);
}

TEST(MultiHead, OneHeadIdentityReducesToAttention) {
  Rng rng(17);
  AttentionConfig cfg;
  cfg.d_model = 6;
  cfg.n_heads = 1;
  cfg.mode = AttentionMode::Canonical;
  MultiHeadWeights<double> w;
  w.wq = {identity(6)};
  w.wk = {identity(6)};
  w.wv = {identity(6)};
  w.wo = identity(6);
  auto x = random_tensor<double>({9, 6}, rng, -1, 1, false);
  EXPECT_LT(max_abs_diff(multi_head(x, w, cfg, 0), canonical_attention(x, x, x)), 1e-12);
}

TEST(MultiHead, OutputShape) {
  Rng rng(18);
  AttentionConfig cfg;
  cfg.d_model = 64;
  auto w = init_multi_head<float>(cfg, rng);
  auto x = random_tensor<float>({50, 64}, rng, -1, 1, false);
  EXPECT_EQ(multi_head(x, w, cfg, 1).shape(), (Shape{50, 64}));
  cfg.mode = AttentionMode::Canonical;
  EXPECT_EQ(multi_head(x, w, cfg, 1).shape(), (Shape{50, 64}));
}

TEST(MultiHead, EightHeadsMatchPerHeadLoops) {
  Rng rng(19);
  AttentionConfig cfg;
  cfg.d_model = 32;
  cfg.mode = AttentionMode::Canonical;
  auto w = init_multi_head<double>(cfg, rng);
  auto x = random_tensor<double>({12, 32}, rng, -1, 1, false);
  const auto out = multi_head(x, w, cfg, 0);

  const auto project = [&](const Tensor<double>& m) {
    Matrix r(12, std::vector<double>(m.cols(), 0.0));
    for (std::size_t i = 0; i < 12; ++i)
      for (std::size_t c = 0; c < m.cols(); ++c)
        for (std::size_t e = 0; e < 32; ++e) r[i][c] += x(i, e) * m(e, c);
    return r;
  };
  Matrix concat(12);
  for (std::size_t h = 0; h < 8; ++h) {
    const auto head = loop_attention(project(w.wq[h]), project(w.wk[h]), project(w.wv[h]));
    for (std::size_t i = 0; i < 12; ++i) concat[i].insert(concat[i].end(), head[i].begin(), head[i].end());
  }
  Matrix expected(12, std::vector<double>(32, 0.0));
  for (std::size_t i = 0; i < 12; ++i)
    for (std::size_t c = 0; c < 32; ++c)
      for (std::size_t e = 0; e < 32; ++e) expected[i][c] += concat[i][e] * w.wo(e, c);
  EXPECT_LT(max_abs_diff(out, expected), 1e-5);
}

TEST(MultiHead, ConfigErrors) {
  AttentionConfig cfg;
  cfg.d_model = 30;
  cfg.n_heads = 8;
  EXPECT_THROW(cfg.validate(), ConfigError);
  Rng rng(1);
  EXPECT_THROW(init_multi_head<double>(cfg, rng), ConfigError);
  cfg.d_model = 32;
  cfg.sampling_factor = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.sampling_factor = 5;
  auto w = init_multi_head<double>(cfg, rng);
  cfg.n_heads = 4;
  EXPECT_THROW(multi_head(Tensor<double>({3, 32}), w, cfg, 0), ConfigError);
  EXPECT_THROW(multi_head(Tensor<double>({3, 16}), w, cfg, 0), DimensionError);
  EXPECT_THROW(parse_attention_mode("sparse"), ConfigError);
}

TEST(MultiHead, GradientsFlowThroughProbSparse) {
  Rng rng(20);
  AttentionConfig cfg;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.sampling_factor = 1;
  auto w = init_multi_head<double>(cfg, rng);
  for (auto* p : w.parameters()) p->set_requires_grad(true);
  auto x = random_tensor<double>({20, 8}, rng, -1, 1, true);
  auto params = w.parameters();
  std::vector<Tensor<double>> inputs{x};
  for (auto* p : params) inputs.push_back(*p);
  const double err = xpass::testing::max_grad_error<double>(inputs, [&] { return multi_head(x, w, cfg, 5); });
  EXPECT_LT(err, 1e-6);
}
