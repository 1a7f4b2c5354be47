#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "xpass/data/dataset.hpp"
#include "xpass/data/metrica.hpp"
#include "xpass/data/window.hpp"

namespace xpass::data {

struct IngestResult {
  Dataset dataset;
  IngestStats stats;
  std::vector<std::string> warnings;
};

// Parsed tracking + events to windowed samples, with per-reason skip counts.
inline IngestResult build_samples(const std::vector<Frame>& frames, ParsedEvents events, const ZoneGrid& grid,
                                  std::uint64_t seed) {
  IngestResult out;
  infer_attack_directions(frames, events.passes);
  out.stats.parsed_passes = events.parsed_passes();
  out.stats.skipped_missing_end = events.missing_end;
  out.stats.non_pass_events = events.non_pass;
  out.warnings = std::move(events.warnings);
  for (const auto& ev : events.passes) {
    auto w = extract_window(frames, ev, grid);
    switch (w.reason) {
      case SkipReason::None:
        out.dataset.samples.push_back(std::move(*w.sample));
        ++out.stats.emitted;
        break;
      case SkipReason::InsufficientHistory:
        ++out.stats.skipped_history;
        break;
      case SkipReason::Gap:
        ++out.stats.skipped_gap;
        break;
      case SkipReason::MissingEnd:
        ++out.stats.skipped_missing_end;
        break;
    }
  }
  auto& ds = out.dataset;
  ds.grid = grid;
  ds.seed = seed;
  ds.split_sizes = default_split_sizes(ds.samples.size());
  ds.info = {{"source", "ingest"},
             {"parsed_passes", out.stats.parsed_passes},
             {"emitted", out.stats.emitted},
             {"skipped_history", out.stats.skipped_history},
             {"skipped_gap", out.stats.skipped_gap},
             {"skipped_missing_end", out.stats.skipped_missing_end},
             {"non_pass_events", out.stats.non_pass_events}};
  return out;
}

inline IngestResult ingest(const std::filesystem::path& tracking_home, const std::filesystem::path& tracking_away,
                           const std::filesystem::path& events_path, const ZoneGrid& grid, std::uint64_t seed = 0) {
  const auto home = parse_tracking(tracking_home, TeamSide::Home);
  const auto away = parse_tracking(tracking_away, TeamSide::Away);
  return build_samples(merge_tracking(home, away), parse_events(events_path), grid, seed);
}

}  // namespace xpass::data
