#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>

#include "xpass/error.hpp"

namespace xpass {

inline constexpr double kPitchLength = 105.0;
inline constexpr double kPitchWidth = 68.0;

enum class GridScheme { Coarse, Fine };

// Pitch discretization into nx zones along the length and ny across the width.
struct ZoneGrid {
  GridScheme scheme = GridScheme::Coarse;
  std::size_t nx = 35;
  std::size_t ny = 34;
  double pitch_length_m = kPitchLength;
  double pitch_width_m = kPitchWidth;

  static constexpr ZoneGrid coarse() { return {GridScheme::Coarse, 35, 34}; }
  static constexpr ZoneGrid fine() { return {GridScheme::Fine, 105, 68}; }
  static ZoneGrid of(GridScheme s) { return s == GridScheme::Coarse ? coarse() : fine(); }

  std::size_t cells() const { return nx * ny; }
  double cell_length() const { return pitch_length_m / static_cast<double>(nx); }
  double cell_width() const { return pitch_width_m / static_cast<double>(ny); }

  friend bool operator==(const ZoneGrid&, const ZoneGrid&) = default;
};

inline std::string_view to_string(GridScheme s) { return s == GridScheme::Coarse ? "coarse" : "fine"; }

inline GridScheme parse_grid_scheme(std::string_view name) {
  if (name == "coarse") return GridScheme::Coarse;
  if (name == "fine") return GridScheme::Fine;
  throw ConfigError("unknown grid scheme '" + std::string(name) + "' (expected coarse or fine)");
}

struct ZoneLabel {
  std::size_t zx = 0;
  std::size_t zy = 0;
  friend bool operator==(const ZoneLabel&, const ZoneLabel&) = default;
};

namespace detail {
inline std::size_t axis_zone(double v, double cell, std::size_t n) {
  const double idx = std::floor(v / cell);
  if (idx <= 0.0) return 0;
  return std::min(static_cast<std::size_t>(idx), n - 1);
}
}  // namespace detail

// Meter coordinates to zone indices. A point on an interior cell edge goes to
// the higher cell; anything outside the pitch is clamped to the border cells.
inline ZoneLabel to_zone(double x_m, double y_m, const ZoneGrid& grid) {
  if (std::isnan(x_m) || std::isnan(y_m)) throw DataError("to_zone: NaN coordinate");
  return {detail::axis_zone(x_m, grid.cell_length(), grid.nx), detail::axis_zone(y_m, grid.cell_width(), grid.ny)};
}

inline std::pair<double, double> zone_center(ZoneLabel label, const ZoneGrid& grid) {
  if (label.zx >= grid.nx || label.zy >= grid.ny) {
    throw IndexError("zone (" + std::to_string(label.zx) + ", " + std::to_string(label.zy) + ") outside " +
                     std::to_string(grid.nx) + "x" + std::to_string(grid.ny) + " grid");
  }
  return {(static_cast<double>(label.zx) + 0.5) * grid.cell_length(),
          (static_cast<double>(label.zy) + 0.5) * grid.cell_width()};
}

// Mirror along the pitch length; applying it twice is the identity.
inline double mirror_x(double x_m, const ZoneGrid& grid = ZoneGrid::coarse()) { return grid.pitch_length_m - x_m; }

}  // namespace xpass
