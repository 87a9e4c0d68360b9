#pragma once

#include <optional>
#include <string>

#include "hepml/nn/adam.hpp"
#include "hepml/nn/model.hpp"

namespace hepml::nn {

// MDL1 checkpoint layout (little-endian):
//   magic "MDL1", version u32 = 1
//   kind u8, activation u8, gru_hidden u32, dropout_rate f32,
//   hlf_dim u32, llf_dim u32, seq_len u32, classes u32,
//   hidden_count u32, hidden widths u32[...]
//   param_count u64, params f32[param_count]
//   has_adam u8; when 1: t u64, beta1 f64, beta2 f64, eps f64,
//                        m f32[param_count], v f32[param_count]
// Save/load round-trips bit-exactly.

constexpr char kCheckpointMagic[4] = {'M', 'D', 'L', '1'};

struct Checkpoint {
  ModelSpec spec;
  uint64_t build_seed = 0;  // spec seed recorded for provenance
  FlatVec<float> params;
  std::optional<int64_t> adam_t;
  AdamConfig<float> adam_config;
  FlatVec<float> adam_m, adam_v;
};

void save_checkpoint(const std::string& path, const Model<float>& model,
                     const Adam<float>* adam = nullptr);

Checkpoint load_checkpoint(const std::string& path);

/// Rebuilds a model from a checkpoint (parameters restored verbatim).
Model<float> restore_model(const Checkpoint& ckpt);

}  // namespace hepml::nn
