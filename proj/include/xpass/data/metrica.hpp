#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "xpass/data/types.hpp"

// Readers for the tracking/event layout of the Metrica Sports public sample
// data: one tracking CSV per team and one event CSV per match.

namespace xpass::data {

enum class CoordinateUnits { Normalized, Meters };

namespace detail {

inline std::vector<std::string> split_csv(std::string_view line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    auto cell = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.remove_suffix(1);
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    cells.emplace_back(cell);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return cells;
}

inline bool is_blank(std::string_view line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

// Numeric cell; empty and "NaN" read as NaN, anything else non-numeric throws.
inline double parse_number(const std::string& cell, std::size_t line, std::string_view column) {
  if (cell.empty() || cell == "NaN" || cell == "nan" || cell == "NA") return std::nan("");
  double value = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("non-numeric value '" + cell + "' in column " + std::string(column), line);
  }
  return value;
}

inline long parse_integer(const std::string& cell, std::size_t line, std::string_view column) {
  long value = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (cell.empty() || ec != std::errc() || ptr != cell.data() + cell.size()) {
    throw ParseError("expected integer in column " + std::string(column) + ", got '" + cell + "'", line);
  }
  return value;
}

inline std::string upper(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

inline double to_meters_x(double v, CoordinateUnits u) { return u == CoordinateUnits::Normalized ? v * kPitchLength : v; }
inline double to_meters_y(double v, CoordinateUnits u) { return u == CoordinateUnits::Normalized ? v * kPitchWidth : v; }

}  // namespace detail

// Units for a data file come from an optional sidecar `<file>.meta.json`
// holding {"units": "normalized" | "meters"}; Metrica files are normalized.
inline CoordinateUnits read_units_sidecar(const std::filesystem::path& path) {
  auto sidecar = path;
  sidecar += ".meta.json";
  if (!std::filesystem::exists(sidecar)) return CoordinateUnits::Normalized;
  std::ifstream in(sidecar);
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(sidecar.string() + ": " + e.what());
  }
  const auto units = meta.value("units", std::string("normalized"));
  if (units == "normalized") return CoordinateUnits::Normalized;
  if (units == "meters") return CoordinateUnits::Meters;
  throw SchemaError(sidecar.string() + ": unknown units '" + units + "'");
}

// One team's positions at one frame, in roster order.
struct TrackingRow {
  int period = 1;
  long frame_id = 0;
  double t = 0.0;
  std::vector<Position> players;
  Position ball{};
};

struct TeamTracking {
  TeamSide side = TeamSide::Home;
  std::vector<std::string> roster;
  bool has_ball = false;
  std::vector<TrackingRow> rows;
};

inline TeamTracking parse_tracking(std::istream& in, TeamSide side, CoordinateUnits units = CoordinateUnits::Normalized) {
  TeamTracking out;
  out.side = side;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  // column index of each player's x cell; y is the next column.
  std::vector<std::size_t> player_cols;
  std::optional<std::size_t> ball_col;
  std::size_t width = 0;
  std::vector<std::string> header;

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    auto cells = detail::split_csv(line);
    if (!header_seen) {
      if (cells.size() < 3 || cells[0] != "Period") continue;  // team/jersey banner rows
      if (cells[1] != "Frame" || cells[2].rfind("Time", 0) != 0) {
        throw SchemaError("tracking header must start with Period,Frame,Time (line " + std::to_string(line_no) + ")");
      }
      width = cells.size();
      header = cells;
      for (std::size_t c = 3; c < cells.size(); ++c) {
        const auto& name = cells[c];
        if (name.empty()) continue;
        if (c + 1 >= cells.size()) {
          throw SchemaError("column '" + name + "' has no y column (line " + std::to_string(line_no) + ")");
        }
        if (name == "Ball") {
          ball_col = c;
        } else if (name.size() > 6 && name.rfind("Player", 0) == 0 &&
                   std::all_of(name.begin() + 6, name.end(), [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
          player_cols.push_back(c);
          out.roster.push_back(name);
        } else {
          throw SchemaError("unknown player column '" + name + "' (line " + std::to_string(line_no) + ")");
        }
        ++c;
      }
      out.has_ball = ball_col.has_value();
      header_seen = true;
      continue;
    }
    if (cells.size() != width && !(cells.size() + 1 == width && cells.size() >= 3)) {
      throw ParseError("expected " + std::to_string(width) + " cells, got " + std::to_string(cells.size()), line_no);
    }
    cells.resize(width);
    TrackingRow row;
    row.period = static_cast<int>(detail::parse_integer(cells[0], line_no, "Period"));
    row.frame_id = detail::parse_integer(cells[1], line_no, "Frame");
    row.t = detail::parse_number(cells[2], line_no, "Time");
    if (std::isnan(row.t)) throw ParseError("missing time", line_no);
    auto read_pos = [&](std::size_t c) {
      Position p;
      p.x = detail::to_meters_x(detail::parse_number(cells[c], line_no, header[c] + " x"), units);
      p.y = detail::to_meters_y(detail::parse_number(cells[c + 1], line_no, header[c] + " y"), units);
      p.valid = !std::isnan(p.x) && !std::isnan(p.y);
      if (!p.valid) p.x = p.y = 0.0;
      return p;
    };
    row.players.reserve(player_cols.size());
    for (auto c : player_cols) row.players.push_back(read_pos(c));
    if (ball_col) row.ball = read_pos(*ball_col);
    out.rows.push_back(std::move(row));
  }
  if (!header_seen && line_no > 0) throw SchemaError("tracking file has no Period,Frame,Time header");
  return out;
}

inline TeamTracking parse_tracking(const std::filesystem::path& path, TeamSide side) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open tracking file " + path.string());
  return parse_tracking(in, side, read_units_sidecar(path));
}

namespace detail {

// Sticky assignment of roster columns to the 11 slots of a team. A player
// keeps their slot through tracking dropouts; a roster player who appears
// while not in the lineup (a substitute) takes an empty slot, else the slot of
// the currently invalid member seen longest ago.
class Lineup {
 public:
  void assign(const TrackingRow& row, std::array<Position, kPlayersPerTeam>& out) {
    ++tick_;
    for (std::size_t s = 0; s < kPlayersPerTeam; ++s) {
      if (slot_[s] && row.players[*slot_[s]].valid) last_seen_[s] = tick_;
    }
    for (std::size_t r = 0; r < row.players.size(); ++r) {
      if (!row.players[r].valid || holds(r)) continue;
      std::optional<std::size_t> target;
      for (std::size_t s = 0; s < kPlayersPerTeam && !target; ++s)
        if (!slot_[s]) target = s;
      if (!target) {
        for (std::size_t s = 0; s < kPlayersPerTeam; ++s) {
          if (row.players[*slot_[s]].valid) continue;
          if (!target || last_seen_[s] < last_seen_[*target]) target = s;
        }
      }
      if (!target) continue;  // more than 11 valid columns; extras are ignored
      slot_[*target] = r;
      last_seen_[*target] = tick_;
    }
    for (std::size_t s = 0; s < kPlayersPerTeam; ++s) out[s] = slot_[s] ? row.players[*slot_[s]] : Position{};
  }

 private:
  bool holds(std::size_t r) const {
    return std::any_of(slot_.begin(), slot_.end(), [r](const auto& s) { return s && *s == r; });
  }

  std::array<std::optional<std::size_t>, kPlayersPerTeam> slot_{};
  std::array<long, kPlayersPerTeam> last_seen_{};
  long tick_ = 0;
};

}  // namespace detail

// Joins the two team files on frame id, in time order. Slots follow
// detail::Lineup; the ball comes from the home file when present there.
inline std::vector<Frame> merge_tracking(const TeamTracking& home, const TeamTracking& away) {
  std::map<long, const TrackingRow*> away_rows;
  for (const auto& r : away.rows) away_rows[r.frame_id] = &r;
  std::vector<std::pair<const TrackingRow*, const TrackingRow*>> joined;
  joined.reserve(home.rows.size());
  for (const auto& hr : home.rows) {
    auto it = away_rows.find(hr.frame_id);
    if (it != away_rows.end()) joined.emplace_back(&hr, it->second);
  }
  std::stable_sort(joined.begin(), joined.end(), [](const auto& a, const auto& b) { return a.first->t < b.first->t; });

  detail::Lineup home_lineup, away_lineup;
  std::vector<Frame> frames;
  frames.reserve(joined.size());
  for (const auto& [hr, ar] : joined) {
    Frame f;
    f.frame_id = hr->frame_id;
    f.period = hr->period;
    f.t = hr->t;
    home_lineup.assign(*hr, f.home);
    away_lineup.assign(*ar, f.away);
    f.ball = home.has_ball ? hr->ball : ar->ball;
    if (!f.ball.valid && away.has_ball) f.ball = ar->ball;
    frames.push_back(f);
  }
  return frames;
}

struct ParsedEvents {
  std::vector<PassEvent> passes;
  std::size_t non_pass = 0;
  std::size_t missing_end = 0;
  std::vector<std::string> warnings;

  std::size_t parsed_passes() const { return passes.size() + missing_end; }
};

// Keeps PASS rows; other event types are counted and dropped. Pass rows
// without an end location are counted under missing_end with a warning.
inline ParsedEvents parse_events(std::istream& in, CoordinateUnits units = CoordinateUnits::Normalized) {
  ParsedEvents out;
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> col;
  std::size_t width = 0;
  std::size_t data_row = 0;
  auto need = [&](const char* name) -> std::size_t {
    auto it = col.find(name);
    if (it == col.end()) throw SchemaError(std::string("event file lacks column '") + name + "'");
    return it->second;
  };
  std::size_t c_type = 0, c_team = 0, c_from = 0, c_sx = 0, c_sy = 0, c_ex = 0, c_ey = 0, c_sframe = 0;
  std::optional<std::size_t> c_period, c_time, c_outcome;

  while (std::getline(in, line)) {
    ++line_no;
    if (detail::is_blank(line)) continue;
    auto cells = detail::split_csv(line);
    if (col.empty()) {
      for (std::size_t i = 0; i < cells.size(); ++i) col[cells[i]] = i;
      width = cells.size();
      c_type = need("Type");
      c_team = need("Team");
      c_from = need("From");
      c_sframe = need("Start Frame");
      need("End Frame");
      c_sx = need("Start X");
      c_sy = need("Start Y");
      c_ex = need("End X");
      c_ey = need("End Y");
      if (col.count("Period")) c_period = col["Period"];
      if (col.count("Start Time [s]")) c_time = col["Start Time [s]"];
      if (col.count("Outcome")) c_outcome = col["Outcome"];
      continue;
    }
    if (cells.size() != width) {
      throw ParseError("expected " + std::to_string(width) + " cells, got " + std::to_string(cells.size()), line_no);
    }
    ++data_row;
    if (detail::upper(cells[c_type]) != "PASS") {
      ++out.non_pass;
      continue;
    }
    PassEvent ev;
    ev.event_id = std::to_string(data_row);
    const auto team = detail::upper(cells[c_team]);
    if (team == "HOME") ev.team = TeamSide::Home;
    else if (team == "AWAY") ev.team = TeamSide::Away;
    else throw ParseError("unknown team '" + cells[c_team] + "'", line_no);
    ev.passer_id = cells[c_from];
    ev.period = c_period ? static_cast<int>(detail::parse_integer(cells[*c_period], line_no, "Period")) : 1;
    const long start_frame = detail::parse_integer(cells[c_sframe], line_no, "Start Frame");
    ev.t_event = c_time ? detail::parse_number(cells[*c_time], line_no, "Start Time [s]")
                        : static_cast<double>(start_frame) / kFrameRate;
    if (std::isnan(ev.t_event)) throw ParseError("missing start time", line_no);
    ev.start_x = detail::to_meters_x(detail::parse_number(cells[c_sx], line_no, "Start X"), units);
    ev.start_y = detail::to_meters_y(detail::parse_number(cells[c_sy], line_no, "Start Y"), units);
    ev.end_x = detail::to_meters_x(detail::parse_number(cells[c_ex], line_no, "End X"), units);
    ev.end_y = detail::to_meters_y(detail::parse_number(cells[c_ey], line_no, "End Y"), units);
    if (c_outcome && detail::upper(cells[*c_outcome]) == "INCOMPLETE") ev.outcome = PassOutcome::Incomplete;
    if (std::isnan(ev.end_x) || std::isnan(ev.end_y)) {
      ++out.missing_end;
      out.warnings.push_back("line " + std::to_string(line_no) + ": pass " + ev.event_id +
                             " has no end location; skipped");
      continue;
    }
    out.passes.push_back(std::move(ev));
  }
  return out;
}

inline ParsedEvents parse_events(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open event file " + path.string());
  return parse_events(in, read_units_sidecar(path));
}

// A team attacks toward +x in a period when its players' mean x lies in the
// left half over that period.
inline void infer_attack_directions(const std::vector<Frame>& frames, std::vector<PassEvent>& passes) {
  std::map<std::pair<int, int>, std::pair<double, std::size_t>> acc;
  for (const auto& f : frames) {
    for (int s = 0; s < 2; ++s) {
      auto& [total, count] = acc[{f.period, s}];
      for (const auto& p : f.team(s == 0 ? TeamSide::Home : TeamSide::Away)) {
        if (!p.valid) continue;
        total += p.x;
        ++count;
      }
    }
  }
  for (auto& ev : passes) {
    auto it = acc.find({ev.period, ev.team == TeamSide::Home ? 0 : 1});
    if (it == acc.end() || it->second.second == 0) continue;
    const double mean_x = it->second.first / static_cast<double>(it->second.second);
    ev.attack_direction = mean_x <= kPitchLength / 2 ? AttackDirection::LeftToRight : AttackDirection::RightToLeft;
  }
}

}  // namespace xpass::data
