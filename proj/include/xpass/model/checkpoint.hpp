#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

#include "xpass/data/dataset.hpp"
#include "xpass/model/network.hpp"

namespace xpass::model {

inline constexpr std::array<char, 8> kCheckpointMagic = {'X', 'P', 'A', 'S', 'S', 'C', 'K', '1'};

// Independent copy of every parameter (the fixed positional table is shared).
template <typename T>
ModelWeights<T> clone_weights(const ModelWeights<T>& w) {
  ModelWeights<T> out = w;
  for (auto& [name, t] : out.named_parameters()) *t = t->clone();
  return out;
}

template <typename T>
void copy_values(ModelWeights<T>& dst, const ModelWeights<T>& src) {
  auto d = dst.named_parameters();
  auto s = const_cast<ModelWeights<T>&>(src).named_parameters();
  if (d.size() != s.size()) throw DimensionError("copy_values: parameter lists differ");
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].second->shape() != s[i].second->shape()) throw DimensionError("copy_values: shape mismatch at " + d[i].first);
    std::copy(s[i].second->data().begin(), s[i].second->data().end(), d[i].second->data().begin());
  }
}

template <typename T>
struct Checkpoint {
  Model<T> model;
  nlohmann::json training = nlohmann::json::object();
};

// Layout: magic "XPASSCK1", u64 header length, JSON header {config, params:
// [{name, shape, offset}], training}, then little-endian f32 parameter blocks
// in manifest order. Offsets are byte offsets into the block area.
template <typename T>
void save_checkpoint(std::ostream& out, const Model<T>& model, const nlohmann::json& training = nlohmann::json::object()) {
  auto& weights = const_cast<ModelWeights<T>&>(model.weights);
  const auto params = weights.named_parameters();
  nlohmann::json manifest = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : params) {
    manifest.push_back({{"name", name}, {"shape", t->shape()}, {"offset", offset}});
    offset += t->size() * sizeof(float);
  }
  nlohmann::json header{{"config", to_json(model.config)}, {"params", manifest}, {"training", training}};
  data::io::write_header(out, kCheckpointMagic, header);
  for (const auto& [name, t] : params) {
    for (T v : t->data()) data::io::write_le<float>(out, static_cast<float>(v));
  }
}

template <typename T>
Checkpoint<T> load_checkpoint(std::istream& in) {
  const auto header = data::io::read_header(in, kCheckpointMagic);
  Checkpoint<T> ck;
  if (!header.contains("config") || !header.contains("params")) throw DataError("checkpoint header is incomplete");
  ck.model.config = model_config_from_json(header.at("config"));
  ck.model.weights = init_weights<T>(ck.model.config);
  ck.training = header.value("training", nlohmann::json::object());
  const auto params = ck.model.weights.named_parameters();
  const auto& manifest = header.at("params");
  if (manifest.size() != params.size()) {
    throw DataError("checkpoint lists " + std::to_string(manifest.size()) + " parameters, config implies " +
                    std::to_string(params.size()));
  }
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& entry = manifest[i];
    const auto& [name, t] = params[i];
    try {
      if (entry.at("name").get<std::string>() != name || entry.at("shape").get<Shape>() != t->shape() ||
          entry.at("offset").get<std::size_t>() != offset) {
        throw DataError("checkpoint manifest entry " + std::to_string(i) + " does not match parameter " + name);
      }
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("checkpoint manifest: ") + e.what());
    }
    for (auto& v : t->data()) v = static_cast<T>(data::io::read_le<float>(in));
    offset += t->size() * sizeof(float);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw DataError("trailing bytes after last parameter block");
  return ck;
}

template <typename T>
void save_checkpoint(const std::filesystem::path& path, const Model<T>& model,
                     const nlohmann::json& training = nlohmann::json::object()) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  save_checkpoint(out, model, training);
}

template <typename T>
Checkpoint<T> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  return load_checkpoint<T>(in);
}

}  // namespace xpass::model
