#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "xpass/data/dataset.hpp"
#include "xpass/model/checkpoint.hpp"
#include "xpass/model/network.hpp"

namespace xpass::harness {

// Fraction of rows whose true index is among the k largest probabilities.
// Ties rank the lower index first.
inline double top_k_accuracy(std::span<const std::vector<double>> probabilities, std::span<const std::size_t> labels,
                             std::size_t k) {
  if (k < 1) throw UsageError("top_k_accuracy: k must be >= 1");
  if (probabilities.size() != labels.size()) throw DimensionError("top_k_accuracy: one label per row required");
  if (probabilities.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    const auto& p = probabilities[i];
    if (k > p.size()) {
      throw UsageError("top_k_accuracy: k = " + std::to_string(k) + " exceeds " + std::to_string(p.size()) + " cells");
    }
    if (labels[i] >= p.size()) throw IndexError("top_k_accuracy: label out of range");
    const double truth = p[labels[i]];
    std::size_t rank = 0;
    for (std::size_t j = 0; j < p.size() && rank < k; ++j) {
      if (p[j] > truth || (p[j] == truth && j < labels[i])) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probabilities.size());
}

struct TopK {
  double top1 = 0.0;
  double top3 = 0.0;
  double top5 = 0.0;
};

struct ZoneSummary {
  std::size_t support = 0;  // samples whose true zone is this one
  std::size_t hits = 0;     // of those, predicted top-1 correctly
  std::size_t predicted = 0;  // samples whose top-1 prediction is this zone
};

struct EvalReport {
  std::size_t count = 0;
  double mean_cel = 0.0;  // per-sample CEL(x) + CEL(y), averaged
  double cel_x = 0.0;
  double cel_y = 0.0;
  TopK x, y, joint;
  std::vector<ZoneSummary> zones_x;
  std::vector<ZoneSummary> zones_y;
};

struct AxisLogits {
  std::vector<double> x;
  std::vector<double> y;
};

namespace detail {

inline double cel(std::span<const double> logits, std::size_t label) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return std::log(z) + mx - logits[label];
}

inline TopK topk_all(std::span<const std::vector<double>> p, std::span<const std::size_t> labels) {
  auto at = [&](std::size_t k) { return k <= p.front().size() ? top_k_accuracy(p, labels, k) : 1.0; };
  return {at(1), at(3), at(5)};
}

inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace detail

// Metrics from per-sample axis logits; joint ranking uses the outer-product
// heatmap over all nx * ny cells.
inline EvalReport evaluate_logits(std::span<const AxisLogits> logits, std::span<const ZoneLabel> labels,
                                  const ZoneGrid& grid) {
  if (logits.empty()) throw UsageError("evaluate: empty split");
  if (logits.size() != labels.size()) throw DimensionError("evaluate: one label per prediction required");
  EvalReport r;
  r.count = logits.size();
  r.zones_x.resize(grid.nx);
  r.zones_y.resize(grid.ny);
  std::vector<std::vector<double>> px, py, pj;
  std::vector<std::size_t> lx, ly, lj;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const auto& l = logits[i];
    const auto& lab = labels[i];
    if (l.x.size() != grid.nx || l.y.size() != grid.ny) throw DimensionError("evaluate: logits do not match grid");
    if (lab.zx >= grid.nx || lab.zy >= grid.ny) throw IndexError("evaluate: label outside grid");
    const double cx = detail::cel(l.x, lab.zx), cy = detail::cel(l.y, lab.zy);
    r.cel_x += cx;
    r.cel_y += cy;
    r.mean_cel += cx + cy;
    auto h = model::heatmap(l.x, l.y);
    px.push_back(model::softmax_vector(l.x));
    py.push_back(model::softmax_vector(l.y));
    pj.push_back(std::move(h.values));
    lx.push_back(lab.zx);
    ly.push_back(lab.zy);
    lj.push_back(lab.zx * grid.ny + lab.zy);
    const auto ax = detail::argmax(px.back()), ay = detail::argmax(py.back());
    ++r.zones_x[lab.zx].support;
    ++r.zones_y[lab.zy].support;
    ++r.zones_x[ax].predicted;
    ++r.zones_y[ay].predicted;
    if (ax == lab.zx) ++r.zones_x[lab.zx].hits;
    if (ay == lab.zy) ++r.zones_y[lab.zy].hits;
  }
  const auto n = static_cast<double>(r.count);
  r.mean_cel /= n;
  r.cel_x /= n;
  r.cel_y /= n;
  r.x = detail::topk_all(px, lx);
  r.y = detail::topk_all(py, ly);
  r.joint = detail::topk_all(pj, lj);
  return r;
}

template <typename T>
AxisLogits predict_logits(const model::Model<T>& m, const data::SequenceSample& sample) {
  NoGradGuard guard;
  const auto l = m.forward(sample);
  return {std::vector<double>(l.x.data().begin(), l.x.data().end()),
          std::vector<double>(l.y.data().begin(), l.y.data().end())};
}

template <typename T>
EvalReport evaluate(const model::Model<T>& m, std::span<const data::SequenceSample> samples) {
  std::vector<AxisLogits> logits;
  std::vector<ZoneLabel> labels;
  logits.reserve(samples.size());
  for (const auto& s : samples) {
    logits.push_back(predict_logits(m, s));
    labels.push_back(s.label);
  }
  return evaluate_logits(logits, labels, m.config.grid);
}

template <typename T>
EvalReport evaluate(const model::Model<T>& m, const data::Dataset& ds, data::Split split) {
  if (!(ds.grid == m.config.grid)) {
    throw ConfigError("checkpoint grid " + std::string(to_string(m.config.grid.scheme)) + " does not match dataset grid " +
                      std::string(to_string(ds.grid.scheme)));
  }
  const auto samples = ds.subset(split);
  if (samples.empty()) throw UsageError("evaluate: the requested split is empty");
  return evaluate(m, std::span<const data::SequenceSample>(samples));
}

}  // namespace xpass::harness
