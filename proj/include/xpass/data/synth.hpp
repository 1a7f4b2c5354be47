#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "xpass/data/dataset.hpp"
#include "xpass/data/window.hpp"
#include "xpass/random.hpp"

// Synthetic stand-in for a tracking corpus: smooth random player motion with
// the ball carried by one member of the possession team.

namespace xpass::data {

using EntityFrame = std::array<Position, kEntities>;

// Maps a full trajectory (window frames followed by the frame at the pass
// instant, possession team first, meters) to the target zone.
using SynthRule = std::function<ZoneLabel(std::span<const EntityFrame>, const ZoneGrid&)>;

// Index (0..10) of the possession player nearest the ball; lower index on ties.
inline std::size_t nearest_teammate(const EntityFrame& frame) {
  std::size_t best = 0;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < kPlayersPerTeam; ++p) {
    const double dx = frame[p].x - frame[kBallIndex].x;
    const double dy = frame[p].y - frame[kBallIndex].y;
    const double d2 = dx * dx + dy * dy;
    if (d2 < best_d2) {
      best_d2 = d2;
      best = p;
    }
  }
  return best;
}

// Default rule: zone of the possession player nearest the ball at the pass
// instant.
inline ZoneLabel nearest_teammate_rule(std::span<const EntityFrame> trajectory, const ZoneGrid& grid) {
  const auto& last = trajectory.back();
  const auto& p = last[nearest_teammate(last)];
  return to_zone(p.x, p.y, grid);
}

struct SynthOptions {
  double max_speed = 4.0;   // m/s
  double accel_sigma = 1.5; // m/s^2 per-frame innovation of the smoothed acceleration
  double accel_memory = 0.9;
  double ball_offset = 0.6; // m ahead of the carrier
  double margin = 1.0;      // m kept clear of the touchlines
};

// Window frames plus the frame at the pass instant for one synthetic event.
inline std::vector<EntityFrame> synth_trajectory(Rng& rng, const SynthOptions& opt = {}) {
  constexpr std::size_t kSteps = kWindowFrames + 1;
  const double dt = 1.0 / kFrameRate;
  const double lo_x = opt.margin, hi_x = kPitchLength - opt.margin;
  const double lo_y = opt.margin, hi_y = kPitchWidth - opt.margin;
  std::vector<EntityFrame> frames(kSteps);
  for (std::size_t e = 0; e + 1 < kEntities; ++e) {
    double x = rng.uniform(lo_x, hi_x), y = rng.uniform(lo_y, hi_y);
    const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double speed = rng.uniform(0.0, opt.max_speed);
    double vx = speed * std::cos(heading), vy = speed * std::sin(heading);
    double ax = 0.0, ay = 0.0;
    for (std::size_t k = 0; k < kSteps; ++k) {
      frames[k][e] = {x, y, true};
      ax = opt.accel_memory * ax + opt.accel_sigma * rng.normal();
      ay = opt.accel_memory * ay + opt.accel_sigma * rng.normal();
      vx += ax * dt;
      vy += ay * dt;
      const double v = std::hypot(vx, vy);
      if (v > opt.max_speed) {
        vx *= opt.max_speed / v;
        vy *= opt.max_speed / v;
      }
      x += vx * dt;
      y += vy * dt;
      if (x < lo_x || x > hi_x) {
        vx = -vx;
        x = std::clamp(x, lo_x, hi_x);
      }
      if (y < lo_y || y > hi_y) {
        vy = -vy;
        y = std::clamp(y, lo_y, hi_y);
      }
    }
  }
  const std::size_t carrier = static_cast<std::size_t>(rng.below(kPlayersPerTeam));
  const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
  for (auto& f : frames) {
    const auto& c = f[carrier];
    f[kBallIndex] = {std::clamp(c.x + opt.ball_offset * std::cos(angle), 0.0, kPitchLength),
                     std::clamp(c.y + opt.ball_offset * std::sin(angle), 0.0, kPitchWidth), true};
  }
  return frames;
}

inline std::string synth_event_id(std::size_t i) {
  std::string digits = std::to_string(i);
  return "synth-" + std::string(digits.size() < 6 ? 6 - digits.size() : 0, '0') + digits;
}

// n samples; sample i depends only on (seed, i).
inline std::vector<SequenceSample> synth_generate(std::size_t n, std::uint64_t seed, const ZoneGrid& grid,
                                                  const SynthRule& rule = nearest_teammate_rule,
                                                  const SynthOptions& opt = {}) {
  if (n == 0) throw UsageError("synth_generate needs n >= 1");
  std::vector<SequenceSample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng(mix_seed(seed, i));
    const auto frames = synth_trajectory(rng, opt);
    const std::span<const EntityFrame> window(frames.data(), kWindowFrames);
    auto features = encode_window(window, false, grid);
    SequenceSample s;
    s.features = std::move(*features);
    s.label = rule(frames, grid);
    s.event_id = synth_event_id(i);
    out.push_back(std::move(s));
  }
  return out;
}

inline Dataset synth_dataset(std::size_t n, std::uint64_t seed, const ZoneGrid& grid,
                             std::optional<SplitSizes> sizes = std::nullopt) {
  Dataset ds;
  ds.grid = grid;
  ds.seed = seed;
  ds.samples = synth_generate(n, seed, grid);
  ds.split_sizes = sizes ? *sizes : default_split_sizes(n);
  if (ds.split_sizes.total() != n) throw UsageError("split sizes must add up to n");
  ds.info = {{"source", "synth"}, {"rule", "nearest_teammate"}};
  return ds;
}

}  // namespace xpass::data
