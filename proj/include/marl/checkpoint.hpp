#pragma once

#include <string>

#include <json.hpp>

#include "marl/model.hpp"
#include "marl/params.hpp"

namespace marl {

// Checkpoint file: 8-byte magic, u64 little-endian manifest length, JSON
// manifest (name/dtype/shape/byte offset per tensor plus model metadata),
// then a raw little-endian blob of 32-bit reals. Save-then-load is bitwise
// identity on every tensor.

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

void save_checkpoint(const std::string& path, const Params& params,
                     const nlohmann::json& meta);

struct Checkpoint {
  nlohmann::json meta;
  Params params;
};
Checkpoint load_checkpoint(const std::string& path);

// Convenience wrappers that carry the model config in the manifest metadata.
void save_model(const std::string& path, const Model& model);
Model load_model(const std::string& path);

}  // namespace marl
