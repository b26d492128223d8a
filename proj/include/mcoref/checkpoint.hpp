#pragma once

#include <string>

#include "mcoref/model.hpp"

namespace mcoref {

// Self-describing binary container: magic + format version, the ModelConfig
// as JSON text, then named tensors as shape + row-major float32 payload.
void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

std::string model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace mcoref
