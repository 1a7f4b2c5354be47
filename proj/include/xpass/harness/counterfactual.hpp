#pragma once

#include <algorithm>
#include <cmath>
#include <span>

#include "xpass/data/types.hpp"
#include "xpass/model/network.hpp"

namespace xpass::harness {

// Jensen-Shannon divergence in nats; zero cells contribute nothing.
inline double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw DimensionError("js_divergence: distributions differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double m = 0.5 * (p[i] + q[i]);
    if (p[i] > 0.0) total += 0.5 * p[i] * std::log(p[i] / m);
    if (q[i] > 0.0) total += 0.5 * q[i] * std::log(q[i] / m);
  }
  return std::max(0.0, total);
}

// Rigid translation of one entity's whole trajectory by (dx, dy) meters in the
// normalized (possession attacks +x) frame, clamped to the pitch.
inline data::SequenceSample displace_entity(const data::SequenceSample& sample, std::size_t entity, double dx_m,
                                            double dy_m, const ZoneGrid& grid = ZoneGrid::coarse()) {
  if (entity == data::kBallIndex) throw UsageError("counterfactual: the ball cannot be displaced");
  if (entity >= data::kBallIndex) {
    throw UsageError("counterfactual: entity index " + std::to_string(entity) + " outside [0, 22)");
  }
  if (sample.features.size() % data::kFeatureDim != 0) throw DimensionError("counterfactual: unexpected feature layout");
  auto out = sample;
  const double sx = dx_m / grid.pitch_length_m, sy = dy_m / grid.pitch_width_m;
  for (std::size_t f = 0; f < out.features.size() / data::kFeatureDim; ++f) {
    auto& x = out.features[f * data::kFeatureDim + 2 * entity];
    auto& y = out.features[f * data::kFeatureDim + 2 * entity + 1];
    x = static_cast<float>(std::clamp(static_cast<double>(x) + sx, 0.0, 1.0));
    y = static_cast<float>(std::clamp(static_cast<double>(y) + sy, 0.0, 1.0));
  }
  return out;
}

struct CounterfactualResult {
  model::HeatmapGrid original;
  model::HeatmapGrid perturbed;
  double divergence = 0.0;
};

template <typename T>
CounterfactualResult counterfactual_diff(const model::Model<T>& m, const data::SequenceSample& sample,
                                         std::size_t entity, double dx_m, double dy_m) {
  const auto moved = displace_entity(sample, entity, dx_m, dy_m, m.config.grid);
  CounterfactualResult r{m.predict(sample), m.predict(moved), 0.0};
  r.divergence = js_divergence(r.original.values, r.perturbed.values);
  return r;
}

}  // namespace xpass::harness
