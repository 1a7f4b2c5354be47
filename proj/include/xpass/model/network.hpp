#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "xpass/attention.hpp"
#include "xpass/compute/ops.hpp"
#include "xpass/data/types.hpp"
#include "xpass/model/config.hpp"
#include "xpass/random.hpp"

namespace xpass::model {

template <typename T>
struct BlockWeights {
  Tensor<T> norm1_gain, norm1_bias;
  MultiHeadWeights<T> attn;
  Tensor<T> norm2_gain, norm2_bias;
  Tensor<T> ff_in, ff_in_bias;    // d_model x d_ff, d_ff
  Tensor<T> ff_out, ff_out_bias;  // d_ff x d_model, d_model
};

template <typename T>
struct StackWeights {
  std::vector<BlockWeights<T>> blocks;
  std::vector<Tensor<T>> distill;  // 3 x d_model x d_model conv kernels
  Tensor<T> norm_gain, norm_bias;  // applied to the class-token row at the end
};

template <typename T>
struct ModelWeights {
  Tensor<T> input_proj;    // input_dim x d_model
  Tensor<T> class_token;   // 1 x d_model
  Tensor<T> context_proj;  // context_dim x d_model, only when context_dim > 0
  std::vector<StackWeights<T>> stacks;
  Tensor<T> head_x, head_x_bias;  // (n_stacks * d_model) x nx, nx
  Tensor<T> head_y, head_y_bias;  // (n_stacks * d_model) x ny, ny
  Tensor<T> positional;           // (seq_len + 1) x d_model, fixed

  // Trainable tensors with stable names; order defines checkpoint layout.
  std::vector<std::pair<std::string, Tensor<T>*>> named_parameters() {
    std::vector<std::pair<std::string, Tensor<T>*>> out;
    out.emplace_back("input_proj", &input_proj);
    out.emplace_back("class_token", &class_token);
    if (context_proj.size() > 0) out.emplace_back("context_proj", &context_proj);
    for (std::size_t s = 0; s < stacks.size(); ++s) {
      const std::string sp = "stack" + std::to_string(s) + ".";
      auto& st = stacks[s];
      for (std::size_t b = 0; b < st.blocks.size(); ++b) {
        const std::string bp = sp + "block" + std::to_string(b) + ".";
        auto& bl = st.blocks[b];
        out.emplace_back(bp + "norm1.gain", &bl.norm1_gain);
        out.emplace_back(bp + "norm1.bias", &bl.norm1_bias);
        for (std::size_t h = 0; h < bl.attn.wq.size(); ++h) {
          const std::string hs = ".h" + std::to_string(h);
          out.emplace_back(bp + "attn.wq" + hs, &bl.attn.wq[h]);
          out.emplace_back(bp + "attn.wk" + hs, &bl.attn.wk[h]);
          out.emplace_back(bp + "attn.wv" + hs, &bl.attn.wv[h]);
        }
        out.emplace_back(bp + "attn.wo", &bl.attn.wo);
        out.emplace_back(bp + "norm2.gain", &bl.norm2_gain);
        out.emplace_back(bp + "norm2.bias", &bl.norm2_bias);
        out.emplace_back(bp + "ff.in", &bl.ff_in);
        out.emplace_back(bp + "ff.in_bias", &bl.ff_in_bias);
        out.emplace_back(bp + "ff.out", &bl.ff_out);
        out.emplace_back(bp + "ff.out_bias", &bl.ff_out_bias);
      }
      for (std::size_t k = 0; k < st.distill.size(); ++k) {
        out.emplace_back(sp + "distill" + std::to_string(k), &st.distill[k]);
      }
      out.emplace_back(sp + "norm.gain", &st.norm_gain);
      out.emplace_back(sp + "norm.bias", &st.norm_bias);
    }
    out.emplace_back("head_x", &head_x);
    out.emplace_back("head_x_bias", &head_x_bias);
    out.emplace_back("head_y", &head_y);
    out.emplace_back("head_y_bias", &head_y_bias);
    return out;
  }

  std::vector<Tensor<T>> parameters() {
    std::vector<Tensor<T>> out;
    for (auto& [name, t] : named_parameters()) out.push_back(*t);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto& [name, t] : named_parameters()) n += t->size();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : named_parameters()) t->zero_grad();
  }
};

// Fixed sinusoidal table: pe[p, 2i] = sin(p / 10000^(2i/d)), pe[p, 2i+1] = cos(...).
template <typename T>
Tensor<T> sinusoidal_positions(std::size_t length, std::size_t d_model) {
  Tensor<T> pe({length, d_model});
  for (std::size_t p = 0; p < length; ++p) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(d_model));
      const double angle = static_cast<double>(p) * rate;
      pe(p, i) = static_cast<T>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return pe;
}

template <typename T>
Tensor<T> trainable(Tensor<T> t) {
  t.set_requires_grad(true);
  return t;
}

// Uniform(+-1/sqrt(fan_in)) matrices, unit norm gains, zero biases and token.
template <typename T>
ModelWeights<T> init_weights(const ModelConfig& config) {
  config.validate();
  Rng rng(mix_seed(config.seed, 0x1417));
  const std::size_t d = config.d_model, dff = config.ff_dim();
  ModelWeights<T> w;
  w.input_proj = trainable(uniform_init<T>({config.input_dim, d}, config.input_dim, rng));
  w.class_token = trainable(Tensor<T>({1, d}));
  if (config.context_dim > 0) {
    w.context_proj = trainable(uniform_init<T>({config.context_dim, d}, config.context_dim, rng));
  }
  const auto acfg = config.attention();
  for (std::size_t s = 0; s < config.n_stacks; ++s) {
    StackWeights<T> st;
    for (std::size_t b = 0; b < config.blocks_per_stack; ++b) {
      BlockWeights<T> bl;
      bl.norm1_gain = trainable(Tensor<T>({d}, T{1}));
      bl.norm1_bias = trainable(Tensor<T>({d}));
      bl.attn = init_multi_head<T>(acfg, rng);
      for (auto* p : bl.attn.parameters()) p->set_requires_grad(true);
      bl.norm2_gain = trainable(Tensor<T>({d}, T{1}));
      bl.norm2_bias = trainable(Tensor<T>({d}));
      bl.ff_in = trainable(uniform_init<T>({d, dff}, d, rng));
      bl.ff_in_bias = trainable(Tensor<T>({dff}));
      bl.ff_out = trainable(uniform_init<T>({dff, d}, dff, rng));
      bl.ff_out_bias = trainable(Tensor<T>({d}));
      st.blocks.push_back(std::move(bl));
    }
    for (std::size_t k = 0; k + 1 < config.blocks_per_stack; ++k) {
      st.distill.push_back(trainable(uniform_init<T>({3, d, d}, 3 * d, rng)));
    }
    st.norm_gain = trainable(Tensor<T>({d}, T{1}));
    st.norm_bias = trainable(Tensor<T>({d}));
    w.stacks.push_back(std::move(st));
  }
  const std::size_t feat = config.n_stacks * d;
  w.head_x = trainable(uniform_init<T>({feat, config.grid.nx}, feat, rng));
  w.head_x_bias = trainable(Tensor<T>({config.grid.nx}));
  w.head_y = trainable(uniform_init<T>({feat, config.grid.ny}, feat, rng));
  w.head_y_bias = trainable(Tensor<T>({config.grid.ny}));
  w.positional = sinusoidal_positions<T>(config.seq_len + 1, d);
  return w;
}

template <typename T>
void zero_heads(ModelWeights<T>& w) {
  for (auto* t : {&w.head_x, &w.head_x_bias, &w.head_y, &w.head_y_bias}) {
    for (auto& v : t->data()) v = T{0};
  }
}

struct ForwardOptions {
  std::uint64_t seed = 0;
  bool training = false;
  AttentionStats* stats = nullptr;
  // Token-count trace: one entry per attention block, (1 + frames).
  std::vector<std::size_t>* shape_trace = nullptr;
};

// Sample features as a seq_len x input_dim tensor of T.
template <typename T>
Tensor<T> feature_tensor(const data::SequenceSample& sample, const ModelConfig& config) {
  if (sample.features.size() != config.seq_len * config.input_dim) {
    throw ConfigError("sample " + sample.event_id + " has " + std::to_string(sample.features.size()) +
                      " feature values, model expects " + std::to_string(config.seq_len) + "x" +
                      std::to_string(config.input_dim));
  }
  if (sample.context.size() != config.context_dim) {
    throw ConfigError("sample " + sample.event_id + " has a context vector of length " +
                      std::to_string(sample.context.size()) + ", model expects " + std::to_string(config.context_dim));
  }
  std::vector<T> values(sample.features.begin(), sample.features.end());
  return Tensor<T>({config.seq_len, config.input_dim}, std::move(values));
}

// Class token (+ position 0) followed by per-frame projections + positions
// (+ projected context). Output: (seq_len + 1) x d_model.
template <typename T>
Tensor<T> embed(const data::SequenceSample& sample, const ModelWeights<T>& w, const ModelConfig& config) {
  const auto x = feature_tensor<T>(sample, config);
  auto frames = add(matmul(x, w.input_proj), slice_rows(w.positional, 1, config.seq_len));
  if (config.context_dim > 0) {
    Tensor<T> ctx({1, config.context_dim}, std::vector<T>(sample.context.begin(), sample.context.end()));
    frames = add_row(frames, matmul(ctx, w.context_proj));
  }
  auto token = add(w.class_token, slice_rows(w.positional, 0, 1));
  return concat_rows(token, frames);
}

// maxpool1d(elu(conv1d(frames))) on rows 1.., row 0 (class token) passes
// through untouched.
template <typename T>
Tensor<T> distill(const Tensor<T>& x, const Tensor<T>& kernel) {
  if (x.rows() < 2) throw DimensionError("distill: need the class token plus at least one frame");
  auto token = slice_rows(x, 0, 1);
  auto frames = slice_rows(x, 1, x.rows() - 1);
  return concat_rows(token, maxpool1d(elu(conv1d(frames, kernel))));
}

// Pre-norm attention and feed-forward sublayers, each with a residual.
template <typename T>
Tensor<T> attention_block(const Tensor<T>& x, const BlockWeights<T>& w, const ModelConfig& config,
                          std::uint64_t seed, const ForwardOptions& opt) {
  const bool drop = opt.training && config.dropout > 0.0;
  auto h = layer_norm(x, w.norm1_gain, w.norm1_bias);
  auto a = multi_head(h, w.attn, config.attention(), seed, opt.stats);
  if (drop) a = dropout(a, config.dropout, mix_seed(seed, 101));
  auto y = add(x, a);
  auto h2 = layer_norm(y, w.norm2_gain, w.norm2_bias);
  auto f = add_row(matmul(elu(add_row(matmul(h2, w.ff_in), w.ff_in_bias)), w.ff_out), w.ff_out_bias);
  if (drop) f = dropout(f, config.dropout, mix_seed(seed, 102));
  return add(y, f);
}

// Attn -> distill -> Attn -> ... -> Attn, then the normalized class-token row
// (1 x d_model).
template <typename T>
Tensor<T> encoder_stack_forward(const Tensor<T>& x, const StackWeights<T>& w, const ModelConfig& config,
                                std::size_t stack_index, const ForwardOptions& opt) {
  if (w.blocks.size() != config.blocks_per_stack || w.distill.size() + 1 != config.blocks_per_stack) {
    throw ConfigError("stack weights do not match blocks_per_stack");
  }
  Tensor<T> h = x;
  const std::uint64_t stack_seed = mix_seed(opt.seed, 1000 + stack_index);
  for (std::size_t b = 0; b < w.blocks.size(); ++b) {
    if (b > 0) h = distill(h, w.distill[b - 1]);
    if (opt.shape_trace) opt.shape_trace->push_back(h.rows());
    h = attention_block(h, w.blocks[b], config, mix_seed(stack_seed, b), opt);
  }
  return layer_norm(slice_rows(h, 0, 1), w.norm_gain, w.norm_bias);
}

template <typename T>
struct Logits {
  Tensor<T> x;  // [nx]
  Tensor<T> y;  // [ny]
};

// Stack s sees the class token and the most recent seq_len / 2^s frames; the
// class-token outputs are concatenated and read by the two axis heads.
template <typename T>
Logits<T> forward(const data::SequenceSample& sample, const ModelWeights<T>& w, const ModelConfig& config,
                  const ForwardOptions& opt) {
  if (w.stacks.size() != config.n_stacks) throw ConfigError("weights hold a different number of stacks");
  const auto embedded = embed(sample, w, config);
  std::vector<Tensor<T>> outputs;
  outputs.reserve(config.n_stacks);
  for (std::size_t s = 0; s < config.n_stacks; ++s) {
    const std::size_t frames = config.stack_frames(s);
    Tensor<T> input = embedded;
    if (frames < config.seq_len) {
      input = concat_rows(slice_rows(embedded, 0, 1), slice_rows(embedded, 1 + config.seq_len - frames, frames));
    }
    outputs.push_back(encoder_stack_forward(input, w.stacks[s], config, s, opt));
  }
  auto features = outputs.size() == 1 ? outputs.front() : concat_cols(outputs);
  Logits<T> out{reshape(add_row(matmul(features, w.head_x), w.head_x_bias), {config.grid.nx}),
                reshape(add_row(matmul(features, w.head_y), w.head_y_bias), {config.grid.ny})};
  if (!all_finite(out.x) || !all_finite(out.y)) {
    throw NumericError("forward produced non-finite logits for sample " + sample.event_id);
  }
  return out;
}

template <typename T>
Logits<T> forward(const data::SequenceSample& sample, const ModelWeights<T>& w, const ModelConfig& config) {
  return forward(sample, w, config, ForwardOptions{config.seed});
}

// CEL on the x-axis zone plus CEL on the y-axis zone.
template <typename T>
Tensor<T> loss(const Logits<T>& logits, ZoneLabel label) {
  return add(cross_entropy(logits.x, label.zx), cross_entropy(logits.y, label.zy));
}

// Probability surface over the grid, row = x zone.
struct HeatmapGrid {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::vector<double> values;

  double operator()(std::size_t ix, std::size_t iy) const { return values[ix * ny + iy]; }
  double total() const {
    double t = 0.0;
    for (double v : values) t += v;
    return t;
  }
  ZoneLabel argmax() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
      if (values[i] > values[best]) best = i;
    return {best / ny, best % ny};
  }
};

inline std::vector<double> softmax_vector(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (auto& v : p) z += (v = std::exp(v - mx));
  for (auto& v : p) v /= z;
  return p;
}

// Outer product of the two axis distributions.
inline HeatmapGrid heatmap(std::span<const double> logits_x, std::span<const double> logits_y) {
  const auto px = softmax_vector(logits_x);
  const auto py = softmax_vector(logits_y);
  HeatmapGrid h{px.size(), py.size(), std::vector<double>(px.size() * py.size())};
  for (std::size_t i = 0; i < px.size(); ++i)
    for (std::size_t j = 0; j < py.size(); ++j) h.values[i * py.size() + j] = px[i] * py[j];
  return h;
}

template <typename T>
HeatmapGrid heatmap(const Logits<T>& logits, const ZoneGrid& grid) {
  if (logits.x.size() != grid.nx || logits.y.size() != grid.ny) {
    throw DimensionError("heatmap: logits " + shape_string(logits.x.shape()) + "/" + shape_string(logits.y.shape()) +
                         " do not match the grid");
  }
  std::vector<double> lx(logits.x.data().begin(), logits.x.data().end());
  std::vector<double> ly(logits.y.data().begin(), logits.y.data().end());
  return heatmap(lx, ly);
}

// Weights plus their configuration.
template <typename T>
struct Model {
  ModelConfig config;
  ModelWeights<T> weights;

  static Model create(const ModelConfig& config) { return {config, init_weights<T>(config)}; }

  Logits<T> forward(const data::SequenceSample& sample) const { return model::forward(sample, weights, config); }
  Logits<T> forward(const data::SequenceSample& sample, const ForwardOptions& opt) const {
    return model::forward(sample, weights, config, opt);
  }
  HeatmapGrid predict(const data::SequenceSample& sample) const {
    NoGradGuard guard;
    return heatmap(forward(sample), config.grid);
  }
};

}  // namespace xpass::model
