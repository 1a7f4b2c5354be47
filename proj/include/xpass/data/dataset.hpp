#pragma once

#include <array>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xpass/data/types.hpp"
#include "xpass/random.hpp"

namespace xpass::data {

enum class Split { Train, Val, Test };

inline Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw UsageError("unknown split '" + std::string(name) + "' (expected train, val or test)");
}

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
  std::size_t total() const { return train + val + test; }
  friend bool operator==(const SplitSizes&, const SplitSizes&) = default;
};

// 70:10:20 rounded to the nearest sample, test takes the remainder.
inline SplitSizes default_split_sizes(std::size_t n) {
  const auto train = static_cast<std::size_t>(std::floor(0.7 * static_cast<double>(n) + 0.5));
  const auto val = static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(n) + 0.5));
  return {train, val, n - train - val};
}

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  const std::vector<std::size_t>& of(Split s) const {
    return s == Split::Train ? train : s == Split::Val ? val : test;
  }
};

// Seeded permutation cut into consecutive train/val/test blocks.
inline SplitIndices split_dataset(std::size_t n, std::uint64_t seed, SplitSizes sizes) {
  if (n < 10) throw UsageError("split_dataset needs at least 10 samples, got " + std::to_string(n));
  if (sizes.total() != n) {
    throw UsageError("split sizes " + std::to_string(sizes.total()) + " do not cover " + std::to_string(n) + " samples");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(sizes.train));
  out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(sizes.train),
                 order.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.val));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(sizes.train + sizes.val), order.end());
  return out;
}

inline SplitIndices split_dataset(std::size_t n, std::uint64_t seed) {
  return split_dataset(n, seed, default_split_sizes(n));
}

struct Dataset {
  ZoneGrid grid = ZoneGrid::coarse();
  std::uint64_t seed = 0;
  std::size_t seq_len = kWindowFrames;
  std::size_t feature_dim = kFeatureDim;
  std::size_t context_dim = 0;
  SplitSizes split_sizes;
  std::vector<SequenceSample> samples;
  // Free-form provenance (ingest counters, generator name); round-trips as is.
  nlohmann::json info = nlohmann::json::object();

  SplitIndices splits() const { return split_dataset(samples.size(), seed, split_sizes); }

  std::vector<SequenceSample> subset(Split s) const {
    const auto parts = splits();
    std::vector<SequenceSample> out;
    for (auto i : parts.of(s)) out.push_back(samples[i]);
    return out;
  }

  const SequenceSample& find(const std::string& event_id) const {
    for (const auto& s : samples)
      if (s.event_id == event_id) return s;
    throw UsageError("no sample with event id '" + event_id + "'");
  }
};

inline constexpr std::array<char, 8> kDatasetMagic = {'X', 'P', 'A', 'S', 'S', 'D', 'S', '1'};

namespace io {

template <typename U>
void write_le(std::ostream& out, U value) {
  static_assert(std::is_trivially_copyable_v<U>);
  std::array<char, sizeof(U)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.write(bytes.data(), sizeof(U));
}

template <typename U>
U read_le(std::istream& in) {
  std::array<char, sizeof(U)> bytes;
  if (!in.read(bytes.data(), sizeof(U))) throw DataError("unexpected end of file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  U value;
  std::memcpy(&value, bytes.data(), sizeof(U));
  return value;
}

inline void write_header(std::ostream& out, const std::array<char, 8>& magic, const nlohmann::json& header) {
  out.write(magic.data(), magic.size());
  const std::string text = header.dump();
  write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline nlohmann::json read_header(std::istream& in, const std::array<char, 8>& magic) {
  std::array<char, 8> got{};
  if (!in.read(got.data(), got.size()) || got != magic) {
    throw DataError("bad magic: expected " + std::string(magic.begin(), magic.end()));
  }
  const auto len = read_le<std::uint64_t>(in);
  if (len > (1ULL << 32)) throw DataError("header length " + std::to_string(len) + " is implausible");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("truncated header");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed header: ") + e.what());
  }
}

}  // namespace io

// Layout: magic "XPASSDS1", u64 header length, JSON header, then per sample
// seq_len*feature_dim f32 features, context_dim f32 context, i32 zx, i32 zy.
inline void save_dataset(std::ostream& out, const Dataset& ds) {
  nlohmann::json header;
  header["grid"] = std::string(to_string(ds.grid.scheme));
  header["count"] = ds.samples.size();
  header["seq_len"] = ds.seq_len;
  header["feature_dim"] = ds.feature_dim;
  header["context_dim"] = ds.context_dim;
  header["seed"] = ds.seed;
  header["split"] = {{"train", ds.split_sizes.train}, {"val", ds.split_sizes.val}, {"test", ds.split_sizes.test}};
  auto ids = nlohmann::json::array();
  for (const auto& s : ds.samples) ids.push_back(s.event_id);
  header["event_ids"] = ids;
  header["info"] = ds.info;
  io::write_header(out, kDatasetMagic, header);
  const std::size_t block = ds.seq_len * ds.feature_dim;
  for (const auto& s : ds.samples) {
    if (s.features.size() != block || s.context.size() != ds.context_dim) {
      throw DimensionError("sample " + s.event_id + " does not match the dataset feature layout");
    }
    for (float v : s.features) io::write_le(out, v);
    for (float v : s.context) io::write_le(out, v);
    io::write_le<std::int32_t>(out, static_cast<std::int32_t>(s.label.zx));
    io::write_le<std::int32_t>(out, static_cast<std::int32_t>(s.label.zy));
  }
}

inline Dataset load_dataset(std::istream& in) {
  const auto header = io::read_header(in, kDatasetMagic);
  Dataset ds;
  try {
    ds.grid = ZoneGrid::of(parse_grid_scheme(header.at("grid").get<std::string>()));
    ds.seq_len = header.at("seq_len").get<std::size_t>();
    ds.feature_dim = header.at("feature_dim").get<std::size_t>();
    ds.context_dim = header.at("context_dim").get<std::size_t>();
    ds.seed = header.at("seed").get<std::uint64_t>();
    const auto& split = header.at("split");
    ds.split_sizes = {split.at("train").get<std::size_t>(), split.at("val").get<std::size_t>(),
                      split.at("test").get<std::size_t>()};
    ds.info = header.value("info", nlohmann::json::object());
    const auto count = header.at("count").get<std::size_t>();
    const auto& ids = header.at("event_ids");
    if (ids.size() != count) throw DataError("event id list does not match sample count");
    ds.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      auto& s = ds.samples[i];
      s.event_id = ids[i].get<std::string>();
      s.features.resize(ds.seq_len * ds.feature_dim);
      for (auto& v : s.features) v = io::read_le<float>(in);
      s.context.resize(ds.context_dim);
      for (auto& v : s.context) v = io::read_le<float>(in);
      const auto zx = io::read_le<std::int32_t>(in);
      const auto zy = io::read_le<std::int32_t>(in);
      if (zx < 0 || zy < 0 || static_cast<std::size_t>(zx) >= ds.grid.nx ||
          static_cast<std::size_t>(zy) >= ds.grid.ny) {
        throw DataError("sample " + s.event_id + " has a label outside the grid");
      }
      s.label = {static_cast<std::size_t>(zx), static_cast<std::size_t>(zy)};
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dataset header: ") + e.what());
  }
  if (ds.split_sizes.total() != ds.samples.size()) throw DataError("dataset split sizes do not cover all samples");
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after last sample");
  return ds;
}

inline void save_dataset(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  save_dataset(out, ds);
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset " + path.string());
  return load_dataset(in);
}

}  // namespace xpass::data
