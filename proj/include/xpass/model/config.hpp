#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "xpass/attention.hpp"
#include "xpass/data/types.hpp"
#include "xpass/pitch_zones.hpp"

namespace xpass::model {

struct ModelConfig {
  std::size_t d_model = 512;
  std::size_t n_heads = 8;
  std::size_t n_stacks = 2;
  std::size_t blocks_per_stack = 3;
  ZoneGrid grid = ZoneGrid::coarse();
  std::size_t input_dim = data::kFeatureDim;
  std::size_t seq_len = data::kWindowFrames;
  std::size_t context_dim = 0;
  std::size_t d_ff = 0;  // 0 means 2 * d_model
  std::size_t sampling_factor = 5;
  AttentionMode mode = AttentionMode::ProbSparse;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  std::size_t ff_dim() const { return d_ff ? d_ff : 2 * d_model; }

  AttentionConfig attention() const {
    AttentionConfig a;
    a.d_model = d_model;
    a.n_heads = n_heads;
    a.sampling_factor = sampling_factor;
    a.mode = mode;
    return a;
  }

  // Frames consumed by stack s: the most recent seq_len / 2^s.
  std::size_t stack_frames(std::size_t s) const {
    std::size_t n = seq_len;
    for (std::size_t i = 0; i < s && n > 1; ++i) n /= 2;
    return n;
  }

  void validate() const {
    attention().validate();
    if (n_stacks < 1) throw ConfigError("n_stacks must be >= 1");
    if (blocks_per_stack < 1) throw ConfigError("blocks_per_stack must be >= 1");
    if (input_dim < 1 || seq_len < 1) throw ConfigError("input_dim and seq_len must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},
          {"n_heads", c.n_heads},
          {"n_stacks", c.n_stacks},
          {"blocks_per_stack", c.blocks_per_stack},
          {"grid", std::string(to_string(c.grid.scheme))},
          {"input_dim", c.input_dim},
          {"seq_len", c.seq_len},
          {"context_dim", c.context_dim},
          {"d_ff", c.d_ff},
          {"sampling_factor", c.sampling_factor},
          {"mode", std::string(to_string(c.mode))},
          {"dropout", c.dropout},
          {"seed", c.seed}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.d_model = j.at("d_model").get<std::size_t>();
    c.n_heads = j.at("n_heads").get<std::size_t>();
    c.n_stacks = j.at("n_stacks").get<std::size_t>();
    c.blocks_per_stack = j.at("blocks_per_stack").get<std::size_t>();
    c.grid = ZoneGrid::of(parse_grid_scheme(j.at("grid").get<std::string>()));
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.seq_len = j.at("seq_len").get<std::size_t>();
    c.context_dim = j.at("context_dim").get<std::size_t>();
    c.d_ff = j.at("d_ff").get<std::size_t>();
    c.sampling_factor = j.at("sampling_factor").get<std::size_t>();
    c.mode = parse_attention_mode(j.at("mode").get<std::string>());
    c.dropout = j.at("dropout").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
}

}  // namespace xpass::model
