#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "xpass/pitch_zones.hpp"

namespace xpass::data {

inline constexpr double kFrameRate = 25.0;
inline constexpr std::size_t kPlayersPerTeam = 11;
inline constexpr std::size_t kEntities = 2 * kPlayersPerTeam + 1;
inline constexpr std::size_t kBallIndex = kEntities - 1;
inline constexpr std::size_t kFeatureDim = 2 * kEntities;  // 46
inline constexpr std::size_t kWindowFrames = 50;
inline constexpr double kWindowSeconds = 2.0;
inline constexpr std::size_t kMaxGapFrames = 10;

enum class TeamSide { Home, Away };

inline std::string to_string(TeamSide s) { return s == TeamSide::Home ? "Home" : "Away"; }

struct Position {
  double x = 0.0;
  double y = 0.0;
  bool valid = false;
};

// One 25 Hz snapshot in meters: 11 home, 11 away, ball.
struct Frame {
  long frame_id = 0;
  int period = 1;
  double t = 0.0;
  std::array<Position, kPlayersPerTeam> home{};
  std::array<Position, kPlayersPerTeam> away{};
  Position ball{};

  const std::array<Position, kPlayersPerTeam>& team(TeamSide s) const { return s == TeamSide::Home ? home : away; }
};

enum class PassOutcome { Complete, Incomplete };
enum class AttackDirection { LeftToRight, RightToLeft };

struct PassEvent {
  std::string event_id;
  TeamSide team = TeamSide::Home;
  std::string passer_id;
  int period = 1;
  double t_event = 0.0;
  double start_x = 0.0;
  double start_y = 0.0;
  double end_x = 0.0;
  double end_y = 0.0;
  PassOutcome outcome = PassOutcome::Complete;
  AttackDirection attack_direction = AttackDirection::LeftToRight;
};

// Model-ready example: kWindowFrames x kFeatureDim features in [0, 1], row-major.
struct SequenceSample {
  std::vector<float> features;
  std::vector<float> context;
  ZoneLabel label;
  std::string event_id;

  friend bool operator==(const SequenceSample&, const SequenceSample&) = default;
};

// End-zone label with the possession team normalized to attack toward +x.
inline ZoneLabel label_pass_end(const PassEvent& event, const ZoneGrid& grid) {
  if (std::isnan(event.end_x) || std::isnan(event.end_y)) {
    throw DataError("pass " + event.event_id + " has no end location");
  }
  const double x = event.attack_direction == AttackDirection::RightToLeft ? mirror_x(event.end_x, grid) : event.end_x;
  return to_zone(x, event.end_y, grid);
}

}  // namespace xpass::data
