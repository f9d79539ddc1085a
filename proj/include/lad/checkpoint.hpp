#pragma once

#include <string>

#include "lad/model.hpp"

namespace lad {

// Self-describing binary container: magic + version, encoder config as JSON,
// every named tensor with its group and trainable flag, the initialization
// snapshot and the RNG states. Layout is documented in the README and stable
// across runs.
void save_checkpoint(const LayeredModel& model, const std::string& path);
LayeredModel load_checkpoint(const std::string& path);

std::string encoder_config_to_json(const EncoderConfig& cfg);
EncoderConfig encoder_config_from_json(const std::string& text);

}  // namespace lad
