#pragma once

#include <filesystem>
#include <string>

#include "dagl/model.hpp"
#include "dagl/training.hpp"

namespace dagl {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
};

/// Parses "key = value" lines; '#' starts a comment, blank lines are ignored.
/// Keys are the ModelConfig/TrainConfig field names (patch_w, patch_h and
/// stride for the patch layout). Unknown or repeated keys and unparsable
/// values throw ConfigError naming the line.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Canonical text that parse_config() maps back to the same config.
std::string to_config_text(const RunConfig& cfg);

}  // namespace dagl
