#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "xpass/data/types.hpp"

namespace xpass::data {

enum class SkipReason { None, InsufficientHistory, Gap, MissingEnd };

struct WindowResult {
  std::optional<SequenceSample> sample;
  SkipReason reason = SkipReason::None;
};

// Entity order inside a feature row: the possession team's 11 players, the
// opponents' 11, then the ball.
inline std::array<Position, kEntities> ordered_entities(const Frame& f, TeamSide possession) {
  std::array<Position, kEntities> out{};
  const auto& own = f.team(possession);
  const auto& opp = f.team(possession == TeamSide::Home ? TeamSide::Away : TeamSide::Home);
  std::copy(own.begin(), own.end(), out.begin());
  std::copy(opp.begin(), opp.end(), out.begin() + kPlayersPerTeam);
  out[kBallIndex] = f.ball;
  return out;
}

// Fills invalid runs of one entity track. Interior runs are linearly
// interpolated between their valid neighbours, runs at either end hold the
// nearest valid value. Returns false if any run exceeds kMaxGapFrames or the
// track has no valid sample at all.
inline bool fill_gaps(std::span<Position> track) {
  const std::size_t n = track.size();
  std::size_t i = 0;
  bool any_valid = false;
  while (i < n) {
    if (track[i].valid) {
      any_valid = true;
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < n && !track[j].valid) ++j;
    if (j - i > kMaxGapFrames) return false;
    const bool has_left = i > 0;
    const bool has_right = j < n;
    for (std::size_t k = i; k < j; ++k) {
      if (has_left && has_right) {
        const double w = static_cast<double>(k - (i - 1)) / static_cast<double>(j - (i - 1));
        track[k].x = track[i - 1].x + w * (track[j].x - track[i - 1].x);
        track[k].y = track[i - 1].y + w * (track[j].y - track[i - 1].y);
      } else if (has_left) {
        track[k].x = track[i - 1].x;
        track[k].y = track[i - 1].y;
      } else if (has_right) {
        track[k].x = track[j].x;
        track[k].y = track[j].y;
      } else {
        return false;
      }
    }
    i = j;
  }
  return any_valid;
}

// Turns frames (already in possession-first order, meters) into the
// normalized feature block. Returns nullopt when a gap is too long.
inline std::optional<std::vector<float>> encode_window(std::span<const std::array<Position, kEntities>> frames,
                                                       bool mirror, const ZoneGrid& grid) {
  const std::size_t len = frames.size();
  std::vector<float> features(len * kFeatureDim);
  std::vector<Position> track(len);
  for (std::size_t e = 0; e < kEntities; ++e) {
    for (std::size_t f = 0; f < len; ++f) track[f] = frames[f][e];
    if (!fill_gaps(track)) return std::nullopt;
    for (std::size_t f = 0; f < len; ++f) {
      double x = mirror ? mirror_x(track[f].x, grid) : track[f].x;
      double y = track[f].y;
      x = std::clamp(x / grid.pitch_length_m, 0.0, 1.0);
      y = std::clamp(y / grid.pitch_width_m, 0.0, 1.0);
      features[f * kFeatureDim + 2 * e] = static_cast<float>(x);
      features[f * kFeatureDim + 2 * e + 1] = static_cast<float>(y);
    }
  }
  return features;
}

// The 50 frames in [t_event - 2 s, t_event), possession team first, flipped so
// the possession team attacks toward +x. `frames` must be sorted by time.
inline WindowResult extract_window(std::span<const Frame> frames, const PassEvent& event, const ZoneGrid& grid) {
  WindowResult result;
  if (std::isnan(event.end_x) || std::isnan(event.end_y)) {
    result.reason = SkipReason::MissingEnd;
    return result;
  }
  constexpr double kTol = 1e-6;
  const auto it = std::lower_bound(frames.begin(), frames.end(), event.t_event - kTol,
                                   [](const Frame& f, double t) { return f.t < t; });
  const auto end_idx = static_cast<std::size_t>(it - frames.begin());
  if (end_idx < kWindowFrames) {
    result.reason = SkipReason::InsufficientHistory;
    return result;
  }
  const std::size_t begin_idx = end_idx - kWindowFrames;
  const double step = 1.0 / kFrameRate;
  for (std::size_t i = begin_idx; i < end_idx; ++i) {
    const Frame& f = frames[i];
    const bool contiguous = i == begin_idx || std::abs(f.t - frames[i - 1].t - step) <= kTol;
    if (f.period != event.period || !contiguous || f.t < event.t_event - kWindowSeconds - kTol) {
      result.reason = SkipReason::InsufficientHistory;
      return result;
    }
  }

  std::vector<std::array<Position, kEntities>> ordered;
  ordered.reserve(kWindowFrames);
  for (std::size_t i = begin_idx; i < end_idx; ++i) ordered.push_back(ordered_entities(frames[i], event.team));
  const bool mirror = event.attack_direction == AttackDirection::RightToLeft;
  auto features = encode_window(ordered, mirror, grid);
  if (!features) {
    result.reason = SkipReason::Gap;
    return result;
  }
  SequenceSample s;
  s.features = std::move(*features);
  s.label = label_pass_end(event, grid);
  s.event_id = event.event_id;
  result.sample = std::move(s);
  return result;
}

struct IngestStats {
  std::size_t parsed_passes = 0;
  std::size_t emitted = 0;
  std::size_t skipped_history = 0;
  std::size_t skipped_gap = 0;
  std::size_t skipped_missing_end = 0;
  std::size_t non_pass_events = 0;

  bool conserved() const {
    return parsed_passes == emitted + skipped_history + skipped_gap + skipped_missing_end;
  }
};

}  // namespace xpass::data
